"""Hyperelastic image warping: a sine-activated coordinate network fitted to landmark pairs.

Coordinates fed to the network live in [-1, 1]^2. The network's last layer emits a
displacement in pixels, which keeps Adam steps well scaled and lets an exact integer
shift be represented exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .. import ndgrad as nd
from ..ndgrad import DiffArray, Parameter, Rng
from ..ndgrad.ops import bilinear_sample
from ..nn import Linear, Module
from ..optim import Adam
from .shape import Shape

log = logging.getLogger(__name__)

J_FLOOR = 1e-6
GAUSS = 1.0 / np.sqrt(3.0)


@dataclass
class EnergyConfig:
    elements: int = 32
    lam: float = 16.0
    mu: tuple[float, ...] = (1.0,)
    alpha: tuple[float, ...] = (2.0,)
    kappa: float = 10.0
    stress_free: bool = True
    lr: float = 1e-3
    max_iters: int = 2000
    tol: float = 1e-6
    window: int = 50
    abs_floor: float = 1e-9
    hidden: tuple[int, ...] = (64, 64, 64)
    omega0: float = 30.0
    omega_hidden: float = 1.0
    margin: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.mu, self.alpha, self.hidden = tuple(self.mu), tuple(self.alpha), tuple(self.hidden)
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.elements < 2:
            raise ValueError("mesh needs at least 2x2 elements")
        if len(self.mu) != len(self.alpha) or any(m <= 0 for m in self.mu):
            raise ValueError("Ogden terms need matching mu/alpha lists with mu > 0")
        if any(a == 0 for a in self.alpha):
            raise ValueError("Ogden alpha must be nonzero")


class TransformNet(Module):
    """T(u) = u + s * MLP(u), MLP with sine activations, s converting pixels to [-1, 1] units."""

    def __init__(self, size: tuple[int, int] = (64, 64), hidden=(64, 64, 64), omega0: float = 30.0,
                 omega_hidden: float = 1.0, seed: int | Rng = 0):
        rng = seed if isinstance(seed, Rng) else Rng(seed)
        H, W = size
        self.size = (H, W)
        self.px_to_unit = np.array([2.0 / (W - 1), 2.0 / (H - 1)])
        self.omegas = [omega0] + [omega_hidden] * (len(hidden) - 1)
        self.layers = []
        fan = 2
        for i, width in enumerate(hidden):
            lin = Linear(fan, width, rng)
            bound = 1.0 / fan if i == 0 else np.sqrt(6.0 / fan) / self.omegas[i]
            lin.weight = Parameter(rng.uniform((fan, width), -bound, bound))
            lin.bias = Parameter(rng.uniform(width, -bound, bound))
            self.layers.append(lin)
            fan = width
        self.out = Linear(fan, 2, rng, zero=True)

    def displacement_px(self, u) -> DiffArray:
        h = nd.as_array(u)
        for w, lin in zip(self.omegas, self.layers):
            h = nd.sin(lin(h) * w) if w != 1.0 else nd.sin(lin(h))
        return self.out(h)

    def __call__(self, u) -> DiffArray:
        """Map (N, 2) normalized coordinates."""
        return nd.as_array(u) + self.displacement_px(u) * self.px_to_unit

    def to_unit(self, pts_px) -> np.ndarray:
        return np.asarray(pts_px, dtype=np.float64) * self.px_to_unit - 1.0

    def to_px(self, u) -> np.ndarray:
        return (np.asarray(u) + 1.0) / self.px_to_unit


@dataclass
class Mesh:
    """Regular bilinear quad mesh over [-1-m, 1+m]^2."""
    elements: int = 32
    margin: float = 0.0

    @property
    def h(self) -> float:
        return (2.0 + 2.0 * self.margin) / self.elements

    @property
    def area(self) -> float:
        return (2.0 + 2.0 * self.margin) ** 2

    def nodes(self) -> np.ndarray:
        """((n+1)^2, 2) node coords (x, y), row-major over y."""
        t = np.linspace(-1.0 - self.margin, 1.0 + self.margin, self.elements + 1)
        gy, gx = np.meshgrid(t, t, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)


def deformation_gradients(pos, mesh: Mesh) -> list[tuple[DiffArray, DiffArray, DiffArray, DiffArray]]:
    """F = [[a, b], [c, d]] at the 2x2 Gauss points of every element, from deformed node positions."""
    n = mesh.elements + 1
    P = nd.reshape(nd.as_array(pos), (n, n, 2))
    P00, P10 = P[:-1, :-1], P[:-1, 1:]
    P01, P11 = P[1:, :-1], P[1:, 1:]
    out = []
    for xi in (-GAUSS, GAUSS):
        for eta in (-GAUSS, GAUSS):
            s, t = 0.5 * (xi + 1.0), 0.5 * (eta + 1.0)
            dX = ((P10 - P00) * (1.0 - t) + (P11 - P01) * t) / mesh.h
            dY = ((P01 - P00) * (1.0 - s) + (P11 - P10) * s) / mesh.h
            out.append((dX[..., 0], dY[..., 0], dX[..., 1], dY[..., 1]))
    return out


@dataclass
class EnergyReport:
    energy: float
    flagged: int
    barrier: float
    det_positive_fraction: float


def ogden_density(a, b, c, d, cfg: EnergyConfig):
    """Strain energy density and J for 2D deformation gradients given entrywise."""
    c11 = a * a + c * c
    c22 = b * b + d * d
    c12 = a * b + c * d
    half_tr = (c11 + c22) * 0.5
    diff = (c11 - c22) * 0.5
    r = nd.sqrt(diff * diff + c12 * c12)
    e1 = half_tr + r
    e2 = nd.clip(half_tr - r, 0.0, None)
    J = a * d - b * c
    psi = None
    for mu, alpha in zip(cfg.mu, cfg.alpha):
        if alpha == 2.0:
            term = (e1 + e2 - 2.0) * (mu / alpha)
        else:
            term = (nd.power(e1, alpha / 2.0) + nd.power(e2, alpha / 2.0) - 2.0) * (mu / alpha)
        psi = term if psi is None else psi + term
    if cfg.stress_free:
        psi = psi - nd.log(nd.clip(J, J_FLOOR, None)) * float(sum(cfg.mu))
    if cfg.kappa:
        psi = psi + (J - 1.0) * (J - 1.0) * cfg.kappa
    return psi, J


def strain_energy(net: TransformNet, mesh: Mesh, cfg: EnergyConfig, report: bool = False):
    """Gauss-quadrature integral of the Ogden density over the undeformed mesh."""
    pos = net(mesh.nodes())
    return strain_energy_from_positions(pos, mesh, cfg, report)


def strain_energy_from_positions(pos, mesh: Mesh, cfg: EnergyConfig, report: bool = False):
    weight = mesh.h * mesh.h / 4.0
    total = None
    js = []
    for a, b, c, d in deformation_gradients(pos, mesh):
        psi, J = ogden_density(a, b, c, d, cfg)
        part = nd.sum(psi) * weight
        total = part if total is None else total + part
        js.append(J.value.ravel())
    if not report:
        return total
    js = np.concatenate(js)
    bad = js <= 0
    barrier = float(bad.sum() * -np.log(J_FLOOR) * sum(cfg.mu) * weight) if cfg.stress_free else 0.0
    if bad.any():
        log.warning("%d quadrature points with J <= 0", int(bad.sum()))
    return total, EnergyReport(float(total.value), int(bad.sum()), barrier, float(np.mean(js > 0)))


def jacobian_audit(net: TransformNet, mesh: Mesh) -> float:
    """Fraction of quadrature points where det F > 0."""
    pos = net(mesh.nodes()).value
    js = [(a * d - b * c).value for a, b, c, d in deformation_gradients(pos, mesh)]
    return float(np.mean(np.concatenate([j.ravel() for j in js]) > 0))


def mismatch(net: TransformNet, virtual_px: np.ndarray, reference_px: np.ndarray) -> tuple[DiffArray, np.ndarray]:
    """mean ||T(virtual) - reference||^4 in pixels, and the per-landmark residual lengths."""
    u = net.to_unit(virtual_px)
    r = (u + net.displacement_px(u) * net.px_to_unit - net.to_unit(reference_px)) / net.px_to_unit
    sq = nd.sum(r * r, axis=1)
    return nd.mean(sq * sq), np.sqrt(sq.value)


@dataclass
class FitResult:
    net: TransformNet
    history: list[float]
    iterations: int
    converged: bool
    residual_px: float
    max_residual_px: float
    det_positive_fraction: float
    flagged: int
    extras: dict = field(default_factory=dict)


class EnergyDivergedError(FloatingPointError):
    pass


def total_energy(net, mesh, cfg, virtual_px, reference_px):
    se = strain_energy(net, mesh, cfg)
    mm, res = mismatch(net, virtual_px, reference_px)
    return se + mm * cfg.lam, se, mm, res


def fit_transform(virtual: Shape, reference: Shape, cfg: EnergyConfig | None = None,
                  size: tuple[int, int] = (64, 64)) -> FitResult:
    """Minimize strain energy + lam * mean ||T(virtual_i) - reference_i||^4 with Adam."""
    cfg = cfg or EnergyConfig()
    virtual.check_topology(reference, "reference")
    net = TransformNet(size, cfg.hidden, cfg.omega0, cfg.omega_hidden, cfg.seed)
    mesh = Mesh(cfg.elements, cfg.margin)
    opt = Adam(net.parameters(), lr=cfg.lr)
    vp, rp = virtual.points(), reference.points()
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        with nd.Tape() as tape:
            pi, se, mm, _ = total_energy(net, mesh, cfg, vp, rp)
        val = float(pi.value)
        if not np.isfinite(val):
            raise EnergyDivergedError(f"iteration {it}: strain={float(se.value)} mismatch={float(mm.value)}")
        history.append(val)
        if it > cfg.window:
            ref_val = history[-1 - cfg.window]
            if abs(val - ref_val) / max(abs(ref_val), cfg.abs_floor) < cfg.tol:
                converged = True
                break
        opt.step(opt.gather(tape.backward(pi)))
    _, rep = strain_energy(net, mesh, cfg, report=True)
    _, res = mismatch(net, vp, rp)
    return FitResult(net, history, it, converged, float(res.mean()), float(res.max()),
                     rep.det_positive_fraction, rep.flagged)


def warp_image(reference: np.ndarray, net: TransformNet, out_size: tuple[int, int] | None = None) -> np.ndarray:
    """I_out(p) = I_ref(T(p)) by bilinear sampling, clamp-to-edge outside the reference."""
    reference = np.asarray(reference, dtype=np.float64)
    H, W = out_size or reference.shape
    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    d = net.displacement_px(net.to_unit(pts)).value
    return bilinear_sample(reference, xs + d[:, 0].reshape(H, W), ys + d[:, 1].reshape(H, W))
