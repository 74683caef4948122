"""Wind-aware coverage on a regular lattice.

The sensing cost of robot ``p`` for point ``q`` is

    f(p, q) = |p - q|^2 + alpha |p - q| (p - q) . e_psi,   -1 < alpha <= 0

so points upwind of a robot are cheap to cover. Cells of the lattice are
assigned to the robot of least cost (a generalised Voronoi partition), and
each robot's stationary point is the cost-weighted cell centroid shifted
downwind by ``-alpha * Mbar / Mhat``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .belief import ParticleSet, effective_sample_size
from .plume import Domain

PHI_FLOOR = 1e-12


@dataclass(frozen=True)
class WccParams:
    alpha: float = -0.75
    grid_resolution: float = 0.5

    def __post_init__(self):
        if not -1 < self.alpha <= 0:
            raise ValueError("alpha must lie in (-1, 0]")
        if self.grid_resolution <= 0:
            raise ValueError("grid_resolution must be > 0")


@dataclass(frozen=True)
class Lattice:
    domain: Domain
    resolution: float

    @property
    def shape(self) -> tuple[int, int]:
        ny = max(1, int(round(self.domain.height / self.resolution)))
        nx = max(1, int(round(self.domain.width / self.resolution)))
        return ny, nx

    @property
    def xs(self) -> np.ndarray:
        ny, nx = self.shape
        dx = self.domain.width / nx
        return self.domain.x_min + dx * (np.arange(nx) + 0.5)

    @property
    def ys(self) -> np.ndarray:
        ny, nx = self.shape
        dy = self.domain.height / ny
        return self.domain.y_min + dy * (np.arange(ny) + 0.5)

    @property
    def cell_area(self) -> float:
        ny, nx = self.shape
        return self.domain.width * self.domain.height / (nx * ny)

    @property
    def points(self) -> np.ndarray:
        """Cell centres, shape (ny * nx, 2), row-major in y."""
        gx, gy = np.meshgrid(self.xs, self.ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass
class SensingField:
    lattice: Lattice
    phi: np.ndarray
    owner: np.ndarray | None = None

    @property
    def phi_flat(self) -> np.ndarray:
        return self.phi.ravel()

    def with_owner(self, owner) -> "SensingField":
        return SensingField(self.lattice, self.phi, np.asarray(owner).reshape(self.phi.shape))


@dataclass(frozen=True)
class CellMoments:
    mass_hat: float
    mass_bar: float
    centroid: np.ndarray


def wind_unit(psi: float) -> np.ndarray:
    return np.array([math.cos(psi), math.sin(psi)])


def kde_bandwidth(xy: np.ndarray, w: np.ndarray, resolution: float) -> float:
    """Silverman-style isotropic bandwidth with a floor of half a lattice cell."""
    w = w / w.sum()
    mean = w @ xy
    var = w @ ((xy - mean) ** 2)
    sigma = math.sqrt(float(var.mean()))
    n_eff = effective_sample_size(w)
    return max(1.06 * sigma * n_eff ** -0.2, 0.5 * resolution)


def density_from_points(xy, w, lattice: Lattice, bandwidth: float) -> SensingField:
    """Isotropic Gaussian mixture on the lattice, floored and normalised to unit mass.

    The kernel factorises over x and y, so the mixture is one matrix
    product of per-axis kernel tables.
    """
    xy = np.asarray(xy, dtype=float)
    w = np.asarray(w, dtype=float)
    norm = 1.0 / (2 * math.pi * bandwidth ** 2)
    gx = np.exp(-0.5 * ((lattice.xs[None, :] - xy[:, :1]) / bandwidth) ** 2)
    gy = np.exp(-0.5 * ((lattice.ys[None, :] - xy[:, 1:2]) / bandwidth) ** 2)
    phi = norm * (gy * w[:, None]).T @ gx
    phi = np.maximum(phi, PHI_FLOOR)
    phi /= phi.sum() * lattice.cell_area
    return SensingField(lattice, phi)


def build_density(belief: ParticleSet, domain: Domain, resolution: float,
                  bandwidth: float | None = None) -> SensingField:
    """Mixture over every pooled source location, each weighted ``w / M`` of its particle."""
    lattice = Lattice(domain, resolution)
    rows, cols = np.nonzero(belief.active)
    xy = belief.states[rows, cols, :2]
    w = belief.weights[rows] / belief.card[rows]
    if bandwidth is None:
        bandwidth = kde_bandwidth(xy, w, resolution)
    return density_from_points(xy, w, lattice, bandwidth)


def sensing_performance(p, q, alpha: float, psi: float):
    """V-distance between robot(s) ``p`` and point(s) ``q``; broadcasts over leading axes."""
    d = np.asarray(p, dtype=float) - np.asarray(q, dtype=float)
    dx, dy = d[..., 0], d[..., 1]
    r2 = dx * dx + dy * dy
    if alpha == 0:
        return r2
    along = dx * math.cos(psi) + dy * math.sin(psi)
    return r2 + alpha * np.sqrt(r2) * along


def _costs(positions, points, alpha, psi):
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    return sensing_performance(positions[:, None, :], points[None, :, :], alpha, psi)


def partition(positions, field: SensingField, alpha: float, psi: float) -> np.ndarray:
    """Owner index per lattice cell (ties to the lowest robot index)."""
    cost = _costs(positions, field.lattice.points, alpha, psi)
    return np.argmin(cost, axis=0).reshape(field.phi.shape)


def _owned(field, positions, alpha, psi):
    if field.owner is not None:
        return field.owner.ravel()
    return partition(positions, field, alpha, psi).ravel()


def cell_moments(index: int, positions, field: SensingField, alpha: float, psi: float,
                 owner=None) -> CellMoments:
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    owner = _owned(field, positions, alpha, psi) if owner is None else np.ravel(owner)
    mask = owner == index
    pts = field.lattice.points[mask]
    p = positions[index]
    if not mask.any():
        return CellMoments(0.0, 0.0, p.copy())
    wphi = field.phi_flat[mask] * field.lattice.cell_area
    d = p - pts
    r = np.hypot(d[:, 0], d[:, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_eta = np.where(r > 0, d @ wind_unit(psi) / r, 0.0)
    weight = (2.0 + alpha * cos_eta) * wphi
    mass_hat = float(weight.sum())
    if mass_hat <= 0:
        return CellMoments(0.0, 0.0, pts.mean(axis=0))
    return CellMoments(mass_hat, float(r @ wphi), weight @ pts / mass_hat)


def all_cell_moments(positions, field: SensingField, alpha: float, psi: float,
                     owner=None) -> list[CellMoments]:
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    owner = _owned(field, positions, alpha, psi) if owner is None else np.ravel(owner)
    return [cell_moments(i, positions, field, alpha, psi, owner) for i in range(len(positions))]


def critical_point(moments: CellMoments, alpha: float, psi: float, domain: Domain) -> np.ndarray:
    if moments.mass_hat <= 0:
        return domain.clamp(moments.centroid)
    p = moments.centroid - (alpha * moments.mass_bar / moments.mass_hat) * wind_unit(psi)
    return domain.clamp(p)


def critical_points(positions, field: SensingField, alpha: float, psi: float,
                    owner=None) -> np.ndarray:
    dom = field.lattice.domain
    moms = all_cell_moments(positions, field, alpha, psi, owner)
    return np.array([critical_point(m, alpha, psi, dom) for m in moms])


def objective(positions, field: SensingField, alpha: float, psi: float, owner=None) -> float:
    """Coverage cost: each cell's V-distance to its owner times its density mass."""
    cost = _costs(positions, field.lattice.points, alpha, psi)
    if owner is None:
        per_cell = cost.min(axis=0)
    else:
        owner = np.ravel(owner)
        per_cell = cost[owner, np.arange(cost.shape[1])]
    return float(per_cell @ field.phi_flat) * field.lattice.cell_area


def coverage_update(positions, field: SensingField, alpha: float, psi: float):
    """Partition, critical points and objective in one pass over the lattice.

    Returns ``(owner, targets, mass_hat, H_V)``; matches the per-robot
    functions above but evaluates the cost matrix once.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(positions)
    lat = field.lattice
    pts = lat.points
    cost = _costs(positions, pts, alpha, psi)
    owner = np.argmin(cost, axis=0)
    wphi = field.phi_flat * lat.cell_area
    h_v = float(cost[owner, np.arange(len(owner))] @ wphi)
    d = positions[owner] - pts
    r = np.hypot(d[:, 0], d[:, 1])
    e = wind_unit(psi)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_eta = np.where(r > 0, d @ e / r, 0.0)
    weight = (2.0 + alpha * cos_eta) * wphi
    m_hat = np.bincount(owner, weight, minlength=n)
    m_bar = np.bincount(owner, r * wphi, minlength=n)
    cx = np.bincount(owner, weight * pts[:, 0], minlength=n)
    cy = np.bincount(owner, weight * pts[:, 1], minlength=n)
    targets = positions.copy()
    ok = m_hat > 0
    cent = np.column_stack([cx[ok], cy[ok]]) / m_hat[ok, None]
    targets[ok] = cent - (alpha * m_bar[ok] / m_hat[ok])[:, None] * e
    counts = np.bincount(owner, minlength=n)
    for i in np.flatnonzero(~ok & (counts > 0)):
        targets[i] = pts[owner == i].mean(axis=0)
    targets = lat.domain.clamp(targets)
    return owner.reshape(field.phi.shape), targets, m_hat, h_v


def objective_gradient(positions, field: SensingField, alpha: float, psi: float) -> np.ndarray:
    """Analytic gradient ``Mhat_i (p_i - p*_i)`` for every robot (unclamped critical point)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    grads = []
    for i, m in enumerate(all_cell_moments(positions, field, alpha, psi)):
        grads.append(m.mass_hat * (positions[i] - m.centroid) + alpha * m.mass_bar * wind_unit(psi))
    return np.array(grads)
