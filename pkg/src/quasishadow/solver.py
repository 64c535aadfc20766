"""Quasi-shadowing fixed-point solver on truncated and cyclic sequence spaces.

Given a pseudo orbit {x_k} of a partially hyperbolic system, the tracing
sequence y_k = exp_{x_k}(v_k) comes from a fixed point of

    Phi(w) = P^{-1} eta(v),        w = (center part u, transversal part v),

where beta(v)_k pushes v_{k-1} through the map in exponential charts, A is
the block (stable + unstable) linearization of beta at 0, eta = beta - A,
and P w = -u + (id - A) v.  In frame coordinates the stable block of
(id - A)^{-1} is a forward recursion pinned to zero at the left window
edge, the unstable block a backward recursion pinned at the right edge;
cyclic orbits close both recursions exactly with a rank-one correction.

Sequence iterates are stored as coefficient arrays c of shape (W, 3) in
the per-point (stable, center, unstable) frames; norms are taken on the
assembled ambient vectors.  The sup norm is max_k |w_k|, the solver norm
is max_k |center_k| + max_k |transversal_k|.

Variants: ``tau1`` translates by a center vector u_k, ``tau2`` slides
along the invariant fiber onto the transversal disk through x_k, ``tau3``
flows along the unit center field for a time tau_k.  One engine solves
all three; they differ in how beta is evaluated and in the center
bookkeeping of the result.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AdmissibilityError, ChartError, ConfigError, ConvergenceError
from .orbits import PseudoOrbit
from .systems import C, S, U, CatCircleSystem, SplitConfig, center_flow, splitting_at
from .torus import ChartConfig, dist, expmap, logmap, minimal_rep, wrap

VARIANTS = ("tau1", "tau2", "tau3")

# blocked-scan chunk; multipliers below _SCAN_TINY fall back to the plain loop
_SCAN_BLOCK = 64
_SCAN_TINY = 1e-3


def _affine_scan(mult: np.ndarray, rhs: np.ndarray, init=0.0) -> np.ndarray:
    """First-order recursion s_j = mult[j] * s_{j-1} + rhs[j], s_{-1} = init.

    ``mult`` has shape (L,); ``rhs`` may carry trailing batch axes (L, ...).
    Evaluated block-wise with cumulative products so the python-level loop
    runs over L/block chunks.
    """
    mult = np.asarray(mult, float)
    rhs = np.asarray(rhs, float)
    L = mult.shape[0]
    out = np.empty(rhs.shape)
    carry = np.zeros(rhs.shape[1:]) + init
    tail = (1,) * (rhs.ndim - 1)
    for lo in range(0, L, _SCAN_BLOCK):
        hi = min(lo + _SCAN_BLOCK, L)
        m = mult[lo:hi]
        if np.min(np.abs(m)) < _SCAN_TINY:
            for j in range(lo, hi):
                carry = mult[j] * carry + rhs[j]
                out[j] = carry
            continue
        q = np.cumprod(m).reshape((hi - lo,) + tail)
        block = q * (carry + np.cumsum(rhs[lo:hi] / q, axis=0))
        out[lo:hi] = block
        carry = block[-1]
    return out


def _reversed_scan(mult: np.ndarray, rhs: np.ndarray, init=0.0) -> np.ndarray:
    """Backward recursion t_{j-1} = (t_j - rhs[j]) / mult[j] with t_L = init.

    Returns t_0 .. t_{L-1} for steps j = 1 .. L (arrays indexed from 0).
    """
    m = 1.0 / mult[::-1]
    r = -rhs[::-1] * m.reshape(m.shape + (1,) * (rhs.ndim - 1))
    return _affine_scan(m, r, init=init)[::-1]


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs; ``epsilon`` is the tracing radius and must stay below rho."""

    variant: str = "tau1"
    epsilon: float = 0.04
    fixed_point_tol: float = 1e-12
    max_iterations: int = 200
    boundary_policy: str = "auto"  # auto | window | cyclic
    chart: ChartConfig = field(default_factory=ChartConfig)
    admissibility_probes: int = 8
    probe_seed: int = 20240

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not 0.0 < self.epsilon < self.chart.rho:
            raise ConfigError(
                f"epsilon must lie in (0, rho={self.chart.rho}), got {self.epsilon}"
            )
        if self.fixed_point_tol <= 0.0:
            raise ConfigError("fixed_point_tol must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.boundary_policy not in ("auto", "window", "cyclic"):
            raise ConfigError(f"unknown boundary policy {self.boundary_policy!r}")


@dataclass(frozen=True)
class ContractionEstimates:
    """Measured constants of the fixed-point scheme (probe maxima, not bounds).

    ``norm_equivalence`` is the sequence-norm constant of
    |w| <= |w|_1 <= L |w| (its suprema may sit at different indices, so it
    can reach the sum of the two projection norms); the pointwise variant
    bounds (|u_k| + |v_k|) / |w_k| at a single index and equals sqrt(2)
    for an orthogonal splitting.
    """

    norm_equivalence: float
    norm_equivalence_pointwise: float
    lambda_tilde: float  # worst stable / inverse-unstable block factor
    eta_lipschitz: float  # measured Lipschitz constant of eta on the epsilon ball
    p_inv_norm: float  # measured solver-norm operator norm of P^{-1}
    observed_contraction: float  # measured Lipschitz factor of Phi
    defect: float
    predicted_radius: float  # L_pt * defect / ((1 - lambda_tilde)(1 - contraction))
    sufficient_condition: bool  # L_pt / (1 - lambda_tilde) * defect < epsilon / 2
    probes: int
    iterations: int = 0
    final_residual: float = float("nan")

    def to_json_dict(self) -> dict:
        return {
            "norm_equivalence": self.norm_equivalence,
            "norm_equivalence_pointwise": self.norm_equivalence_pointwise,
            "lambda_tilde": self.lambda_tilde,
            "eta_lipschitz": self.eta_lipschitz,
            "p_inv_norm": self.p_inv_norm,
            "observed_contraction": self.observed_contraction,
            "defect": self.defect,
            "predicted_radius": self.predicted_radius,
            "sufficient_condition": self.sufficient_condition,
            "probes": self.probes,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
        }


@dataclass
class ShadowResult:
    """Tracing sequence with per-variant center bookkeeping and diagnostics.

    ``trans`` holds the ambient transversal components v_k (y_k equals
    exp_{x_k} v_k); ``corrections`` holds center vectors u_k for tau1 and
    scalar fiber moves / flow times for tau2 / tau3.
    """

    variant: str
    ks: np.ndarray
    x: np.ndarray
    y: np.ndarray
    trans: np.ndarray
    corrections: np.ndarray
    diagnostics: ContractionEstimates
    max_trace_dist: float
    step_residual: float
    center_residual: float
    delta_history: np.ndarray
    cyclic: bool

    def to_json_dict(self) -> dict:
        key = {"tau1": "u", "tau2": "slide", "tau3": "tau"}[self.variant]
        return {
            "variant": self.variant,
            "cyclic": self.cyclic,
            "k": self.ks.tolist(),
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "v": self.trans.tolist(),
            key: self.corrections.tolist(),
            "max_trace_dist": self.max_trace_dist,
            "step_residual": self.step_residual,
            "center_residual": self.center_residual,
            "delta_history": self.delta_history.tolist(),
            "diagnostics": self.diagnostics.to_json_dict(),
        }

    def correction_norms(self) -> np.ndarray:
        if self.corrections.ndim == 2:
            return np.linalg.norm(self.corrections, axis=-1)
        return np.abs(self.corrections)

    def write_csv(self, path) -> None:
        d = self.x.shape[1]
        dd = dist(self.x, self.y)
        cn = self.correction_norms()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = (
                ["k"]
                + [f"x{i + 1}" for i in range(d)]
                + [f"y{i + 1}" for i in range(d)]
                + ["dist", "correction_norm"]
            )
            writer.writerow(header)
            for i, k in enumerate(self.ks):
                row = (
                    [int(k)]
                    + [format(v, ".17g") for v in self.x[i]]
                    + [format(v, ".17g") for v in self.y[i]]
                    + [format(dd[i], ".17g"), format(cn[i], ".17g")]
                )
                writer.writerow(row)


class OrbitOperators:
    """Charts, frames and transfer blocks along one pseudo orbit.

    Step j maps the tangent space at point ``step_src[j]`` to the one at
    ``step_dst[j]``: windows have W - 1 steps targeting points 1 .. W-1
    (row 0 of step-aligned outputs stays zero), cyclic orbits have W steps
    with the wrap-around targeting point 0.  ``alpha`` and ``beta_u`` are
    the scalar stable/unstable block multipliers in frame coordinates.
    """

    def __init__(
        self,
        sys: CatCircleSystem,
        orbit: PseudoOrbit,
        chart: ChartConfig | None = None,
        split_cfg: SplitConfig | None = None,
    ) -> None:
        self.sys = sys
        self.orbit = orbit
        self.chart = chart if chart is not None else ChartConfig()
        X = orbit.points
        W = len(X)
        if not orbit.cyclic and W < 2:
            raise ValueError("orbit windows need at least two points")
        self.n_points = W
        self.cyclic = orbit.cyclic
        split = splitting_at(sys, X, split_cfg)
        self.frames = split.frames
        self.frames_inv = split.frames_inv
        if orbit.cyclic:
            self.step_src = (np.arange(W) - 1) % W
            self.step_dst = np.arange(W)
        else:
            self.step_src = np.arange(W - 1)
            self.step_dst = np.arange(1, W)
        self.jac = sys.differential(X[self.step_src])
        M = self.frames_inv[self.step_dst] @ self.jac @ self.frames[self.step_src]
        self.alpha = np.ascontiguousarray(M[:, S, S])
        self.beta_u = np.ascontiguousarray(M[:, U, U])
        with np.errstate(divide="ignore"):
            inv_beta = np.where(self.beta_u != 0.0, 1.0 / np.abs(self.beta_u), np.inf)
        self.lambda_tilde = float(max(np.abs(self.alpha).max(), inv_beta.max()))

    # -- norms ---------------------------------------------------------

    def assemble(self, coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("kij,...kj->...ki", self.frames, coeffs)

    def coeffs_of(self, ambient: np.ndarray) -> np.ndarray:
        return np.einsum("kij,...kj->...ki", self.frames_inv, ambient)

    def norm_sup(self, coeffs: np.ndarray):
        n = np.linalg.norm(self.assemble(coeffs), axis=-1).max(axis=-1)
        return float(n) if np.ndim(n) == 0 else n

    def norm_one(self, coeffs: np.ndarray):
        center = np.abs(coeffs[..., C]).max(axis=-1)
        us = coeffs.copy()
        us[..., C] = 0.0
        trans = np.linalg.norm(self.assemble(us), axis=-1).max(axis=-1)
        n = center + trans
        return float(n) if np.ndim(n) == 0 else n

    # -- operators -----------------------------------------------------

    def apply_beta(self, v_coeffs: np.ndarray, variant: str = "tau1") -> np.ndarray:
        """beta(v) in frame coordinates, scattered to the step target rows.

        Accepts batched input (..., W, 3); the center column of the input
        is ignored.  Raises ChartError when an intermediate point leaves
        the chart, which signals defect or epsilon too large.
        """
        X = self.orbit.points
        rho, rho0 = self.chart.rho, self.chart.rho0
        us = v_coeffs[..., self.step_src, :].copy()
        us[..., C] = 0.0
        v_amb = np.einsum("kij,...kj->...ki", self.frames[self.step_src], us)
        norms = np.linalg.norm(v_amb, axis=-1)
        if norms.size and float(norms.max()) > rho:
            raise ChartError(
                f"transversal component of size {float(norms.max()):.6g} "
                f"left the working ball of radius {rho}"
            )
        z = self.sys.forward(wrap(X[self.step_src] + v_amb))
        dst = X[self.step_dst]
        out = np.zeros(v_coeffs.shape)
        if variant == "tau2":
            w = self._slide_coeffs(z, self.step_dst)
        else:
            w_amb = logmap(dst, z, rho0)
            w = np.einsum("kij,...kj->...ki", self.frames_inv[self.step_dst], w_amb)
        out[..., self.step_dst, :] = w
        return out

    def _slide_coeffs(self, z: np.ndarray, dst_rows: np.ndarray) -> np.ndarray:
        """Coefficients of the fiber slide of z onto the transversal disk at x_dst."""
        X = self.orbit.points
        d_base = minimal_rep(z[..., :2] - X[dst_rows, :2])
        E = self.frames[dst_rows][:, :2][:, :, [S, U]]
        det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
        a = (E[:, 1, 1] * d_base[..., 0] - E[:, 0, 1] * d_base[..., 1]) / det
        c = (-E[:, 1, 0] * d_base[..., 0] + E[:, 0, 0] * d_base[..., 1]) / det
        w = np.zeros(d_base.shape[:-1] + (3,))
        w[..., S] = a
        w[..., U] = c
        amb = np.einsum("kij,...kj->...ki", self.frames[dst_rows], w)
        n = np.linalg.norm(amb, axis=-1)
        if n.size and float(n.max()) > self.chart.rho0:
            raise ChartError(
                f"fiber slide of size {float(n.max()):.6g} left the chart "
                f"of radius {self.chart.rho0}"
            )
        return w

    def apply_transfer(self, v_coeffs: np.ndarray) -> np.ndarray:
        """The block operator A: stable and unstable one-step transfer."""
        out = np.zeros(v_coeffs.shape)
        out[..., self.step_dst, S] = self.alpha * v_coeffs[..., self.step_src, S]
        out[..., self.step_dst, U] = self.beta_u * v_coeffs[..., self.step_src, U]
        return out

    def eta(self, v_coeffs: np.ndarray, variant: str = "tau1") -> np.ndarray:
        return self.apply_beta(v_coeffs, variant) - self.apply_transfer(v_coeffs)

    def _solve_block(self, mult: np.ndarray, rhs_pts: np.ndarray) -> np.ndarray:
        """Solve v_k - mult_k v_{k-1} = r_k for one 1-d block.

        The recursion direction follows the block's contraction direction:
        forward when all |mult| < 1, backward when all |mult| > 1.
        """
        r = np.moveaxis(rhs_pts, -1, 0)  # (W or n_steps aligned below, batch...)
        lo, hi = float(np.min(np.abs(mult))), float(np.max(np.abs(mult)))
        forward = hi < 1.0
        if not forward and lo <= 1.0:
            raise AdmissibilityError(
                f"block multipliers straddle 1 (|m| in [{lo:.6g}, {hi:.6g}]); "
                "not partially hyperbolic at this scale"
            )
        if not self.cyclic:
            out = np.zeros(r.shape)
            if forward:
                # zero inflow at the left edge: the first value is its own rhs
                out[0] = r[0]
                out[1:] = _affine_scan(mult, r[1:], init=r[0])
            else:
                # zero outflow at the right edge
                out[:-1] = _reversed_scan(mult, r[1:])
            return np.moveaxis(out, 0, -1)
        n = self.n_points
        if forward:
            part = _affine_scan(mult, r, init=0.0)
            hom = _affine_scan(mult, np.zeros(r.shape), init=1.0)
            closure = part[-1] / (1.0 - hom[-1])
            out = part + closure * hom
        else:
            part = np.zeros(r.shape)
            hom = np.zeros(mult.shape)
            if n > 1:
                part[:-1] = _reversed_scan(mult[1:], r[1:])
                hom[:-1] = _reversed_scan(mult[1:], np.zeros(mult[1:].shape), init=1.0)
            hom[-1] = 1.0
            hom_b = hom.reshape(hom.shape + (1,) * (r.ndim - 1))
            closure = (r[0] - part[0]) / (hom_b[0] - mult[0])
            out = part + closure * hom_b
        return np.moveaxis(out, 0, -1)

    def solve_p(self, rhs: np.ndarray) -> np.ndarray:
        """w = P^{-1} rhs: center sign flip plus the two block recursions."""
        out = np.empty(rhs.shape)
        out[..., C] = -rhs[..., C]
        out[..., S] = self._solve_block(self.alpha, rhs[..., S])
        out[..., U] = self._solve_block(self.beta_u, rhs[..., U])
        return out

    def phi(self, w_coeffs: np.ndarray, variant: str = "tau1") -> np.ndarray:
        """One fixed-point update Phi(w) = P^{-1} eta(v)."""
        out = self.solve_p(self.eta(w_coeffs, variant))
        if variant == "tau2":
            out[..., C] = 0.0
        return out


def build_operators(
    sys: CatCircleSystem,
    orbit: PseudoOrbit,
    chart: ChartConfig | None = None,
    split_cfg: SplitConfig | None = None,
) -> OrbitOperators:
    """Assemble frames, charts and transfer blocks along the orbit."""
    return OrbitOperators(sys, orbit, chart, split_cfg)


def apply_beta(ops: OrbitOperators, v_coeffs: np.ndarray, variant: str = "tau1") -> np.ndarray:
    return ops.apply_beta(v_coeffs, variant)


def solve_p(ops: OrbitOperators, rhs: np.ndarray) -> np.ndarray:
    return ops.solve_p(rhs)


def _scaled_draw(
    ops: OrbitOperators,
    rng: np.random.Generator,
    count: int,
    size: float,
    center: bool,
    solver_norm: bool,
) -> np.ndarray:
    draws = rng.standard_normal((count, ops.n_points, 3))
    if not center:
        draws[..., C] = 0.0
    norms = ops.norm_one(draws) if solver_norm else ops.norm_sup(draws)
    scale = size * (0.25 + 0.75 * rng.random(count)) / norms
    return draws * scale[:, None, None]


def estimate_contraction(
    sys: CatCircleSystem,
    orbit: PseudoOrbit,
    cfg: SolverConfig | None = None,
    probes: int = 32,
    seed: int | None = None,
    ops: OrbitOperators | None = None,
) -> ContractionEstimates:
    """Probe-based estimates of the scheme's constants on this orbit.

    All quantities are measured maxima over random probes: the norm
    equivalence constant, the Lipschitz constant of eta on the epsilon
    ball, the solver-norm operator norm of P^{-1}, and the Lipschitz
    factor of Phi on transversal pairs.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    ops = ops if ops is not None else build_operators(sys, orbit, cfg.chart)
    rng = np.random.default_rng(cfg.probe_seed if seed is None else seed)
    eps = cfg.epsilon
    probes = max(2, int(probes))

    w_full = _scaled_draw(ops, rng, probes, eps, center=True, solver_norm=True)
    big_l = float(np.max(ops.norm_one(w_full) / ops.norm_sup(w_full)))
    us = w_full.copy()
    us[..., C] = 0.0
    split_norm = np.abs(w_full[..., C]) + np.linalg.norm(ops.assemble(us), axis=-1)
    full_norm = np.linalg.norm(ops.assemble(w_full), axis=-1)
    big_l_pt = float(np.max(split_norm / full_norm))

    v_a = _scaled_draw(ops, rng, probes, eps, center=False, solver_norm=False)
    v_b = _scaled_draw(ops, rng, probes, eps, center=False, solver_norm=False)
    eta_a = ops.eta(v_a, cfg.variant)
    eta_b = ops.eta(v_b, cfg.variant)
    c_delta = float(
        np.max(ops.norm_sup(eta_a - eta_b) / ops.norm_sup(v_a - v_b))
    )

    r = _scaled_draw(ops, rng, probes, eps, center=True, solver_norm=True)
    p_inv = float(np.max(ops.norm_one(ops.solve_p(r)) / ops.norm_one(r)))

    u_a = _scaled_draw(ops, rng, probes, eps, center=False, solver_norm=True)
    u_b = _scaled_draw(ops, rng, probes, eps, center=False, solver_norm=True)
    phi_a = ops.phi(u_a, cfg.variant)
    phi_b = ops.phi(u_b, cfg.variant)
    observed = float(np.max(ops.norm_one(phi_a - phi_b) / ops.norm_one(u_a - u_b)))

    defect = float(orbit.defect)
    lam = ops.lambda_tilde
    if lam < 1.0 and observed < 1.0:
        predicted = big_l_pt * defect / ((1.0 - lam) * (1.0 - observed))
    else:
        predicted = float("inf")
    sufficient = lam < 1.0 and big_l_pt / (1.0 - lam) * defect < 0.5 * eps
    return ContractionEstimates(
        norm_equivalence=big_l,
        norm_equivalence_pointwise=big_l_pt,
        lambda_tilde=lam,
        eta_lipschitz=c_delta,
        p_inv_norm=p_inv,
        observed_contraction=observed,
        defect=defect,
        predicted_radius=predicted,
        sufficient_condition=sufficient,
        probes=probes,
    )


def _point_wrap_gap(sys: CatCircleSystem, orbit: PseudoOrbit) -> float:
    return float(dist(sys.forward(orbit.points[-1]), orbit.points[0]))


def shadow(
    sys: CatCircleSystem,
    orbit: PseudoOrbit,
    cfg: SolverConfig | None = None,
    initial: np.ndarray | None = None,
    admissibility: ContractionEstimates | None = None,
) -> ShadowResult:
    """Trace ``orbit`` with the variant requested in ``cfg``.

    Starts from the zero sequence (or ``initial`` coefficients inside the
    epsilon ball), iterates Phi until the solver-norm update drops below
    ``fixed_point_tol``, and verifies the step relation of the variant.
    An admissibility check runs first and refuses orbits whose measured
    defect cannot be traced within epsilon; passing ``admissibility``
    reuses probe constants measured on a structurally identical orbit
    (the block norms and the defect of this orbit are still checked).
    """
    cfg = cfg if cfg is not None else SolverConfig()
    if cfg.boundary_policy != "auto":
        want_cyclic = cfg.boundary_policy == "cyclic"
        if want_cyclic != orbit.cyclic:
            raise ConfigError(
                f"boundary policy {cfg.boundary_policy!r} does not match "
                f"orbit cyclic={orbit.cyclic}"
            )
    if orbit.leaf_mode and cfg.variant != "tau2":
        gap = _point_wrap_gap(sys, orbit)
        if gap > cfg.chart.rho:
            raise AdmissibilityError(
                f"leaf-mode orbit has pointwise wrap gap {gap:.6g} > rho="
                f"{cfg.chart.rho}; only the fiber-sliding variant (tau2) applies"
            )
    ops = build_operators(sys, orbit, cfg.chart)
    if ops.lambda_tilde >= 1.0:
        raise AdmissibilityError(
            f"stable/unstable block norm {ops.lambda_tilde:.6g} >= 1; "
            "not partially hyperbolic at this scale"
        )
    if admissibility is None:
        est = estimate_contraction(
            sys, orbit, cfg, probes=cfg.admissibility_probes, ops=ops
        )
    else:
        est = replace(admissibility, defect=float(orbit.defect))
    defect = float(orbit.defect)
    if orbit.leaf_mode and cfg.variant != "tau2":
        defect = max(defect, _point_wrap_gap(sys, orbit))
    if est.observed_contraction >= 1.0:
        raise AdmissibilityError(
            f"no contraction: observed factor {est.observed_contraction:.6g} >= 1"
        )
    predicted = est.norm_equivalence_pointwise * defect / (
        (1.0 - ops.lambda_tilde) * (1.0 - est.observed_contraction)
    )
    if predicted >= cfg.epsilon:
        raise AdmissibilityError(
            f"defect {defect:.6g} predicts tracing radius {predicted:.6g} "
            f">= epsilon {cfg.epsilon}; reduce the defect or raise epsilon"
        )

    W = ops.n_points
    if initial is None:
        w = np.zeros((W, 3))
    else:
        w = np.array(initial, float)
        if w.shape != (W, 3):
            raise ValueError(f"initial guess must have shape ({W}, 3)")
        if ops.norm_one(w) > cfg.epsilon:
            raise ValueError("initial guess lies outside the epsilon ball")
        if cfg.variant == "tau2":
            w[:, C] = 0.0

    deltas = []
    for _ in range(cfg.max_iterations):
        w_new = ops.phi(w, cfg.variant)
        delta = ops.norm_one(w_new - w)
        deltas.append(delta)
        w = w_new
        if ops.norm_one(w) > cfg.epsilon:
            raise ConvergenceError(
                f"iterate of solver norm {ops.norm_one(w):.6g} escaped the "
                f"epsilon ball ({cfg.epsilon})"
            )
        if delta < cfg.fixed_point_tol:
            break
    else:
        raise ConvergenceError(
            f"no fixed point within {cfg.max_iterations} iterations "
            f"(last update {deltas[-1]:.3g})"
        )

    return _extract(sys, orbit, ops, cfg, est, w, np.asarray(deltas))


def _extract(
    sys: CatCircleSystem,
    orbit: PseudoOrbit,
    ops: OrbitOperators,
    cfg: SolverConfig,
    est: ContractionEstimates,
    w: np.ndarray,
    deltas: np.ndarray,
) -> ShadowResult:
    X = orbit.points
    us = w.copy()
    us[:, C] = 0.0
    v_amb = ops.assemble(us)
    y = expmap(X, v_amb, cfg.chart.rho0)
    max_trace = float(np.max(dist(X, y)))
    center_res = float(np.max(np.abs(ops.coeffs_of(v_amb)[:, C])))

    src, dst = ops.step_src, ops.step_dst
    fy = sys.forward(y[src])
    if cfg.variant == "tau1":
        u_amb = ops.frames[:, :, C] * w[:, C, None]
        corrections = u_amb
        targets = expmap(
            X[dst],
            u_amb[dst] + logmap(X[dst], fy, cfg.chart.rho0),
            cfg.chart.rho0,
        )
    elif cfg.variant == "tau3":
        corrections = w[:, C].copy()
        targets = center_flow(fy, corrections[dst])
    else:
        slid = ops._slide_coeffs(fy, dst)
        targets = wrap(X[dst] + np.einsum("kij,kj->ki", ops.frames[dst], slid))
        corrections = np.zeros(len(X))
        corrections[dst] = minimal_rep(targets[:, 2] - fy[:, 2])
    step_residual = float(np.max(dist(y[dst], targets)))

    est = replace(est, iterations=len(deltas), final_residual=float(deltas[-1]))
    return ShadowResult(
        variant=cfg.variant,
        ks=orbit.ks.copy(),
        x=X.copy(),
        y=y,
        trans=v_amb,
        corrections=corrections,
        diagnostics=est,
        max_trace_dist=max_trace,
        step_residual=step_residual,
        center_residual=center_res,
        delta_history=deltas,
        cyclic=orbit.cyclic,
    )


def iterate_phi(
    sys: CatCircleSystem,
    orbit: PseudoOrbit,
    cfg: SolverConfig | None = None,
    initial: np.ndarray | None = None,
) -> ShadowResult:
    """Center-translation tracing (the tau1 variant)."""
    cfg = replace(cfg if cfg is not None else SolverConfig(), variant="tau1")
    return shadow(sys, orbit, cfg, initial)


def shadow_tau2(
    sys: CatCircleSystem,
    orbit: PseudoOrbit,
    cfg: SolverConfig | None = None,
    initial: np.ndarray | None = None,
) -> ShadowResult:
    """Fiber-slide tracing: y_k lies on the transversal disk and on the fiber of f(y_{k-1})."""
    cfg = replace(cfg if cfg is not None else SolverConfig(), variant="tau2")
    return shadow(sys, orbit, cfg, initial)


def shadow_tau3(
    sys: CatCircleSystem,
    orbit: PseudoOrbit,
    cfg: SolverConfig | None = None,
    initial: np.ndarray | None = None,
) -> ShadowResult:
    """Center-flow tracing: y_k is reached from f(y_{k-1}) by flowing for time tau_k."""
    if sys.center_dimension != 1:
        raise ConfigError("flow-time tracing needs a one-dimensional center")
    cfg = replace(cfg if cfg is not None else SolverConfig(), variant="tau3")
    return shadow(sys, orbit, cfg, initial)


def transversal_slide(sys: CatCircleSystem, x, z, split_cfg: SplitConfig | None = None) -> np.ndarray:
    """Move z along its fiber onto the transversal disk through x.

    The result keeps the base coordinates of z and lies in the span of the
    stable and unstable directions at x (a 2x2 linear solve in the chart).
    """
    x = wrap(x)
    z = np.asarray(z, float)
    split = splitting_at(sys, x, split_cfg)
    E = split.frames[:2][:, [S, U]]
    det = E[0, 0] * E[1, 1] - E[0, 1] * E[1, 0]
    d_base = minimal_rep(z[..., :2] - x[:2])
    a = (E[1, 1] * d_base[..., 0] - E[0, 1] * d_base[..., 1]) / det
    c = (-E[1, 0] * d_base[..., 0] + E[0, 0] * d_base[..., 1]) / det
    move = a[..., None] * split.frames[:, S] + c[..., None] * split.frames[:, U]
    return wrap(x + move)


def tau2_lipschitz(
    sys: CatCircleSystem,
    x,
    n_samples: int = 200,
    radius: float = 0.04,
    seed: int = 0,
) -> float:
    """Measured Lipschitz constant of the fiber slide at x over random nearby points."""
    x = wrap(x)
    rng = np.random.default_rng(seed)
    offsets = rng.standard_normal((n_samples, 3))
    offsets *= (radius * rng.random(n_samples) ** (1 / 3) / np.linalg.norm(offsets, axis=-1))[:, None]
    ys = wrap(x + offsets)
    slid = transversal_slide(sys, x, ys)
    ratios = dist(slid, x) / dist(ys, x)
    return float(np.max(ratios))
