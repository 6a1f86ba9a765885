"""Flow-regularized consistency scoring between two views of a scene.

The score of a grayscale pair (i1, i2) is built in three steps. First the
brightness-constancy constraint is linearized around i1: a displacement
u(p) = (u_x, u_y) at pixel p should satisfy

    gx(p) u_x(p) + gy(p) u_y(p) + (i2(p) - i1(p)) ~ 0.

Second, the displacement field that best explains the pair subject to being
smooth is solved for:

    u* = argmin_u  mu * ||A^T u + b||^2 + u^T (L (x) I2) u,

where A stacks the per-pixel gradients, b = i2 - i1, L is the 4-neighbor
graph Laplacian of the pixel grid, (x) I2 denotes the Kronecker product with
the 2x2 identity (the smoothness penalty acts on each flow component), and
mu is small so smoothness dominates. Third, the score is the squared norm of
the residual that remains:

    score(i1, i2) = ||A^T u* + b||^2.

Smoothing both images with a symmetric doubly-stochastic filter provably
shrinks this score for mean-zero non-constant difference images; the trial
harness in this module measures that claim empirically, optionally with an
affine restyling composed on top. The small-mu expansion utilities check
the closed-form first-order behavior of the score's projector against a
dense solve.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (ConfigError, DegenerateProblemError, ShapeError,
                     SolverError)
from .image import (BoundaryMode, Image, LowpassConfig, gaussian_lowpass,
                    gradient)
from .styles import AffineColor, apply_style

# Scores at or below this are treated as "nothing left to contract" when
# counting strict decreases; a constant pair produces exactly zero twice.
DEGENERATE_SCORE = 1e-15

# Gram-matrix eigenvalues at or below this (relative to the trace) mark a
# flow direction the data term cannot see.
NULLSPACE_RTOL = 1e-13


@dataclass(frozen=True, eq=False)
class GridLaplacian:
    """Graph Laplacian of the H x W pixel grid with 4-neighbor edges.

    Symmetric positive semidefinite with zero row sums; on a connected grid
    the only null vector is the constant one. CIRCULAR adds wraparound
    edges so every node has degree 4.
    """

    height: int
    width: int
    boundary: BoundaryMode
    matrix: sp.csr_matrix

    @property
    def n_nodes(self) -> int:
        return self.height * self.width


def grid_laplacian(height: int, width: int,
                   boundary: BoundaryMode = BoundaryMode.CIRCULAR) -> GridLaplacian:
    if height < 1 or width < 1:
        raise ConfigError(f"grid must be at least 1x1, got {height}x{width}")
    ids = np.arange(height * width).reshape(height, width)
    left = [ids[:, :-1].ravel(), ids[:-1, :].ravel()]
    right = [ids[:, 1:].ravel(), ids[1:, :].ravel()]
    if boundary is BoundaryMode.CIRCULAR:
        if width > 1:
            left.append(ids[:, -1])
            right.append(ids[:, 0])
        if height > 1:
            left.append(ids[-1, :])
            right.append(ids[0, :])
    i = np.concatenate(left)
    j = np.concatenate(right)
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-np.ones(2 * len(i)), np.ones(2 * len(i))])
    matrix = sp.coo_matrix((vals, (rows, cols)),
                           shape=(height * width, height * width)).tocsr()
    matrix.sum_duplicates()
    return GridLaplacian(height=height, width=width, boundary=boundary, matrix=matrix)


@dataclass(frozen=True, eq=False)
class FlowProblem:
    """Linearized brightness-constancy system for one image pair.

    a_x, a_y hold the gradients of the first image, b the per-pixel
    difference. color_consistent records whether b sums to (numerically)
    zero, the premise under which smoothing provably helps. degenerate
    marks an all-zero data term (constant first image).
    """

    a_x: np.ndarray
    a_y: np.ndarray
    b: np.ndarray
    laplacian: GridLaplacian
    mu: float
    mean_b: float
    color_consistent: bool
    degenerate: bool

    @property
    def height(self) -> int:
        return self.b.shape[0]

    @property
    def width(self) -> int:
        return self.b.shape[1]


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacements in pixels, x and y components."""

    u_x: np.ndarray
    u_y: np.ndarray

    def __post_init__(self):
        ux = np.array(self.u_x, dtype=np.float64, copy=True)
        uy = np.array(self.u_y, dtype=np.float64, copy=True)
        if ux.ndim != 2 or ux.shape != uy.shape:
            raise ShapeError(f"flow components must be equal 2-D arrays, "
                             f"got {ux.shape} and {uy.shape}")
        if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy))):
            raise ShapeError("flow field contains NaN or Inf")
        ux.flags.writeable = False
        uy.flags.writeable = False
        object.__setattr__(self, "u_x", ux)
        object.__setattr__(self, "u_y", uy)

    @classmethod
    def zero(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u_x, self.u_y)


@dataclass(frozen=True)
class SolverConfig:
    """Conjugate-gradient settings for the flow solve.

    The default tolerance is attainable even when smoothing has shrunk the
    gradients and with them the smallest data-term eigenvalues; rounding
    floors the reachable residual near eps times the condition number, so
    very tight tolerances only make sense on well-conditioned problems.
    """

    tol: float = 1e-7
    max_iter: int | None = None
    boundary: BoundaryMode = BoundaryMode.CIRCULAR

    def __post_init__(self):
        if not (self.tol > 0):
            raise ConfigError(f"tolerance must be positive, got {self.tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")


def build_problem(i1: Image, i2: Image, mu: float,
                  boundary: BoundaryMode = BoundaryMode.CIRCULAR) -> FlowProblem:
    """Assemble gradients, difference image and Laplacian for a pair."""
    if i1.channels != 1 or i2.channels != 1:
        raise ShapeError("the flow model is grayscale; convert to luminance first")
    if i1.shape != i2.shape:
        raise ShapeError(f"image shapes differ: {i1.shape} vs {i2.shape}")
    if i1.height < 3 or i1.width < 3:
        raise ShapeError(f"need at least 3x3 pixels, got {i1.height}x{i1.width}")
    if not (mu > 0) or not np.isfinite(mu):
        raise ConfigError(f"mu must be positive and finite, got {mu}")
    gx, gy = gradient(i1, boundary)
    a_x = gx.plane().copy()
    a_y = gy.plane().copy()
    b = i2.plane() - i1.plane()
    n = b.size
    lap = grid_laplacian(i1.height, i1.width, boundary)
    return FlowProblem(
        a_x=a_x, a_y=a_y, b=b, laplacian=lap, mu=float(mu),
        mean_b=float(b.mean()),
        color_consistent=bool(abs(b.sum()) <= 1e-6 * n),
        degenerate=bool(np.abs(a_x).max() == 0.0 and np.abs(a_y).max() == 0.0),
    )


def _system_operator(prob: FlowProblem):
    """Matrix-free apply of (mu A A^T + L (x) I2) on stacked (2, n) vectors."""
    ax = prob.a_x.ravel()
    ay = prob.a_y.ravel()
    lap = prob.laplacian.matrix
    mu = prob.mu

    def apply(u):
        s = ax * u[0] + ay * u[1]
        return np.stack([mu * ax * s + lap @ u[0],
                         mu * ay * s + lap @ u[1]])

    return apply


def _preconditioner(prob: FlowProblem):
    """SPD preconditioner for the flow system.

    With the circular boundary the grid Laplacian diagonalizes in the 2-D
    Fourier basis, so (L + c I) with c set to the mean data weight is solved
    exactly per flow component; the system is smoothness-dominated and PCG
    then converges in a handful of iterations. Other boundaries fall back to
    Jacobi scaling.
    """
    ax = prob.a_x.ravel()
    ay = prob.a_y.ravel()
    h, w = prob.b.shape
    if prob.laplacian.boundary is BoundaryMode.CIRCULAR:
        lam_y = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.fft.fftfreq(h))
        lam_x = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.fft.rfftfreq(w))
        shift = max(prob.mu * float(np.mean(ax * ax + ay * ay)), 1e-300)
        denom = lam_y[:, None] + lam_x[None, :] + shift

        def precondition(r):
            out = np.empty_like(r)
            for comp in range(2):
                spectrum = np.fft.rfft2(r[comp].reshape(h, w))
                out[comp] = np.fft.irfft2(spectrum / denom, s=(h, w)).ravel()
            return out

        return precondition

    diag = np.stack([prob.mu * ax * ax + prob.laplacian.matrix.diagonal(),
                     prob.mu * ay * ay + prob.laplacian.matrix.diagonal()])
    diag = np.where(diag > 0, diag, 1.0)
    return lambda r: r / diag


def _project_out_unseen_constants(prob: FlowProblem, u: np.ndarray) -> np.ndarray:
    """Remove constant-flow components the system does not determine.

    The smoothness term vanishes on componentwise-constant flows, so such a
    direction is fixed only if the gradients see it. Directions in the null
    space of the 2x2 gradient Gram matrix are undetermined; zeroing them
    returns the minimum-norm solution without touching the residual.
    """
    ax = prob.a_x.ravel()
    ay = prob.a_y.ravel()
    gram = np.array([[ax @ ax, ax @ ay],
                     [ax @ ay, ay @ ay]])
    eigvals, eigvecs = np.linalg.eigh(gram)
    cutoff = NULLSPACE_RTOL * max(gram.trace(), 1e-300)
    n = ax.size
    for k in range(2):
        if eigvals[k] <= cutoff:
            c = eigvecs[:, k]
            coeff = (u[0].sum() * c[0] + u[1].sum() * c[1]) / n
            u = u - coeff * c[:, None]
    return u


def _pcg_round(apply_op, precondition, rhs, x, tol_abs, budget):
    """One preconditioned CG sweep from the current iterate; returns the
    iterate, iterations spent, and the recursive residual norm."""
    r = rhs - apply_op(x)
    z = precondition(r)
    rz = float(np.vdot(r, z).real)
    p = z.copy()
    r_norm = float(np.linalg.norm(r))
    spent = 0
    while r_norm > tol_abs and spent < budget:
        q = apply_op(p)
        pq = float(np.vdot(p, q).real)
        if pq <= 0.0:
            break
        alpha = rz / pq
        x = x + alpha * p
        r = r - alpha * q
        spent += 1
        r_norm = float(np.linalg.norm(r))
        if r_norm <= tol_abs:
            break
        z = precondition(r)
        rz_new = float(np.vdot(r, z).real)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, spent, r_norm


def _solve(prob: FlowProblem, tol: float, max_iter: int | None) -> tuple[FlowField, int]:
    """Preconditioned CG on the flow system.

    Started from zero the iterates stay in the range of the (possibly
    singular) system matrix, and undetermined constant-flow directions are
    projected out afterwards, so degenerate problems yield the minimum-norm
    flow instead of failing. Convergence is judged on a freshly computed
    residual; if rounding drift in the recursion let the sweep stop early, a
    second sweep refines from the current iterate.
    """
    h, w = prob.b.shape
    apply_op = _system_operator(prob)
    precondition = _preconditioner(prob)
    rhs = -prob.mu * np.stack([prob.a_x.ravel() * prob.b.ravel(),
                               prob.a_y.ravel() * prob.b.ravel()])
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return FlowField.zero(h, w), 0
    if max_iter is None:
        # exact arithmetic terminates within the system dimension
        max_iter = max(500, 3 * rhs.size)

    x = np.zeros_like(rhs)
    tol_abs = tol * rhs_norm
    iterations = 0
    residual = 1.0
    for _ in range(2):
        x, spent, _ = _pcg_round(apply_op, precondition, rhs, x,
                                 tol_abs, max_iter - iterations)
        iterations += spent
        residual = float(np.linalg.norm(rhs - apply_op(x))) / rhs_norm
        if residual <= tol:
            break
    if residual > tol:
        raise SolverError(
            f"flow solve did not reach tolerance {tol:g} within {iterations} iterations "
            f"(achieved relative residual {residual:.3e})", residual=residual)
    x = _project_out_unseen_constants(prob, x)
    return FlowField(x[0].reshape(h, w), x[1].reshape(h, w)), iterations


def solve_flow(prob: FlowProblem, tol: float = 1e-7,
               max_iter: int | None = None) -> FlowField:
    """Solve for the smoothest flow explaining the pair to the given tolerance."""
    field, _ = _solve(prob, tol, max_iter)
    return field


@dataclass(frozen=True, eq=False)
class ConsistencyReport:
    """Score of one pair: squared residual norm under the optimal smooth flow."""

    score: float
    residual_norm: float
    flow: FlowField
    solver_iterations: int
    color_consistent: bool
    degenerate: bool
    mu: float

    def to_json_dict(self) -> dict:
        return {
            "score": self.score,
            "residual_norm": self.residual_norm,
            "solver_iterations": self.solver_iterations,
            "color_consistent": self.color_consistent,
            "degenerate": self.degenerate,
            "mu": self.mu,
        }


def _data_residual(prob: FlowProblem, flow: FlowField) -> np.ndarray:
    return prob.a_x * flow.u_x + prob.a_y * flow.u_y + prob.b


def consistency_score(i1: Image, i2: Image, mu: float = 1e-3,
                      solver: SolverConfig = SolverConfig()) -> ConsistencyReport:
    """Consistency score of a pair; lower means the views agree better.

    Color images are reduced to luminance first. The score equals
    ||A^T u* + b||^2, which is algebraically the projector form
    ||(I - mu A^T (mu A A^T + L (x) I2)^{-1} A) b||^2.
    """
    prob = build_problem(i1.luminance(), i2.luminance(), mu, solver.boundary)
    flow, iterations = _solve(prob, solver.tol, solver.max_iter)
    residual = _data_residual(prob, flow)
    norm = float(np.linalg.norm(residual))
    return ConsistencyReport(
        score=norm * norm,
        residual_norm=norm,
        flow=flow,
        solver_iterations=iterations,
        color_consistent=prob.color_consistent,
        degenerate=prob.degenerate,
        mu=prob.mu,
    )


def residual_score(i1: Image, i2: Image, flow: FlowField,
                   boundary: BoundaryMode = BoundaryMode.CIRCULAR) -> float:
    """Squared data residual of a pair under an externally supplied flow."""
    lum1, lum2 = i1.luminance(), i2.luminance()
    if flow.u_x.shape != (lum1.height, lum1.width):
        raise ShapeError(f"flow {flow.u_x.shape} does not match image "
                         f"{(lum1.height, lum1.width)}")
    gx, gy = gradient(lum1, boundary)
    r = gx.plane() * flow.u_x + gy.plane() * flow.u_y + (lum2.plane() - lum1.plane())
    return float(np.sum(r * r))


# ---------------------------------------------------------------------------
# Trial harness: does smoothing (optionally composed with an affine restyle)
# strictly decrease the consistency score on random color-consistent pairs?
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothPairGenerator:
    """Seeded generator of smooth, color-consistent random image pairs.

    Each pair is a smooth random base image plus a smooth random difference
    whose per-channel mean is subtracted, so the difference sums to zero
    exactly. Trial RNG is derived from (seed, index), making results
    independent of scheduling.
    """

    height: int = 16
    width: int = 16
    channels: int = 3
    content_sigma: float = 1.2
    delta_scale: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.height < 3 or self.width < 3:
            raise ConfigError(f"pairs must be at least 3x3, got {self.height}x{self.width}")
        if self.channels not in (1, 3):
            raise ConfigError(f"channels must be 1 or 3, got {self.channels}")
        if not (self.content_sigma > 0):
            raise ConfigError(f"content_sigma must be positive, got {self.content_sigma}")
        if not (self.delta_scale > 0):
            raise ConfigError(f"delta_scale must be positive, got {self.delta_scale}")

    def _smooth(self, arr: np.ndarray) -> np.ndarray:
        cfg = LowpassConfig(sigma=self.content_sigma, downscale=1,
                            boundary=BoundaryMode.CIRCULAR)
        return gaussian_lowpass(Image(arr), cfg).data.copy()

    def pair(self, index: int) -> tuple[Image, Image]:
        rng = np.random.default_rng((self.seed, index))
        shape = (self.height, self.width, self.channels)
        base = self._smooth(rng.uniform(0.0, 1.0, shape))
        lo, hi = base.min(), base.max()
        if hi > lo:
            base = 0.15 + 0.7 * (base - lo) / (hi - lo)
        delta = self._smooth(rng.uniform(-1.0, 1.0, shape))
        peak = np.abs(delta).max()
        if peak > 0:
            delta *= self.delta_scale / peak
        delta -= delta.mean(axis=(0, 1), keepdims=True)
        return Image(base), Image(base + delta)


def _random_affine_style(rng: np.random.Generator) -> AffineColor:
    gains = rng.uniform(0.7, 1.3, 3)
    mix = rng.uniform(-0.15, 0.15, (3, 3))
    offset = rng.uniform(-0.1, 0.1, 3)
    return AffineColor(np.diag(gains) + mix, offset)


@dataclass(frozen=True)
class TrialOutcome:
    index: int
    score_raw: float
    score_smoothed: float
    degenerate: bool

    @property
    def strict(self) -> bool:
        return not self.degenerate and self.score_smoothed < self.score_raw


@dataclass(frozen=True, eq=False)
class TrialReport:
    """Aggregate of the smoothing-contraction trials.

    strict_fraction counts trials where the smoothed score is strictly
    below the raw score, over non-degenerate trials only; violating trial
    indices are kept for inspection.
    """

    styled: bool
    flow_source: str
    trials: int
    seed: int
    mu: float
    sigma: float
    boundary: str
    height: int
    width: int
    outcomes: tuple[TrialOutcome, ...]

    @property
    def n_degenerate(self) -> int:
        return sum(1 for o in self.outcomes if o.degenerate)

    @property
    def n_strict(self) -> int:
        return sum(1 for o in self.outcomes if o.strict)

    @property
    def violations(self) -> tuple[int, ...]:
        return tuple(o.index for o in self.outcomes if not o.degenerate and not o.strict)

    @property
    def strict_fraction(self) -> float:
        n_valid = len(self.outcomes) - self.n_degenerate
        return self.n_strict / n_valid if n_valid else 0.0

    @property
    def mean_score_ratio(self) -> float:
        ratios = [o.score_smoothed / o.score_raw for o in self.outcomes if not o.degenerate]
        return float(np.mean(ratios)) if ratios else 0.0

    def to_json_dict(self) -> dict:
        return {
            "styled": self.styled,
            "flow_source": self.flow_source,
            "trials": self.trials,
            "seed": self.seed,
            "mu": self.mu,
            "sigma": self.sigma,
            "boundary": self.boundary,
            "height": self.height,
            "width": self.width,
            "n_degenerate": self.n_degenerate,
            "n_strict": self.n_strict,
            "strict_fraction": self.strict_fraction,
            "mean_score_ratio": self.mean_score_ratio,
            "violating_trials": list(self.violations),
            "scores": [[o.score_raw, o.score_smoothed] for o in self.outcomes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["trial", "score_raw", "score_smoothed", "ratio", "degenerate"])
            for o in self.outcomes:
                ratio = "" if o.degenerate else repr(o.score_smoothed / o.score_raw)
                writer.writerow([o.index, repr(o.score_raw), repr(o.score_smoothed),
                                 ratio, int(o.degenerate)])


def smoothing_consistency_trials(
        trials: int,
        gen: SmoothPairGenerator,
        cfg: LowpassConfig,
        mu: float = 1e-3,
        *,
        styled: bool = False,
        flow_source: str = "scored",
        solver: SolverConfig | None = None,
        threads: int = 1) -> TrialReport:
    """Score random pairs raw versus smoothed and count strict decreases.

    With styled=True each trial additionally applies a random affine color
    edit: the comparison becomes style(smooth(i)) against style(i), checking
    that low-band editing keeps views more consistent than full-band editing.
    flow_source selects where the optimal flow comes from: "scored" solves
    it on the exact pair being scored (the literal definition), "unstyled"
    solves it on the pre-style pair and only evaluates the residual on the
    styled one.
    """
    if trials < 1:
        raise ConfigError(f"need at least one trial, got {trials}")
    if flow_source not in ("scored", "unstyled"):
        raise ConfigError(f"flow_source must be 'scored' or 'unstyled', got '{flow_source}'")
    if cfg.boundary is not BoundaryMode.CIRCULAR:
        raise ConfigError("the contraction argument needs the CIRCULAR boundary")
    if styled and getattr(gen, "channels", 3) != 3:
        raise ConfigError("styled trials need 3-channel pairs")
    if solver is None:
        solver = SolverConfig(boundary=cfg.boundary)
    smooth_cfg = LowpassConfig(sigma=cfg.sigma, kernel_radius=cfg.kernel_radius,
                               downscale=1, boundary=cfg.boundary)

    def run_trial(index: int) -> TrialOutcome:
        i1, i2 = gen.pair(index)
        s1 = gaussian_lowpass(i1, smooth_cfg)
        s2 = gaussian_lowpass(i2, smooth_cfg)
        if styled:
            op = _random_affine_style(np.random.default_rng((gen.seed, index, 77)))
            raw1, raw2 = apply_style(op, i1), apply_style(op, i2)
            low1, low2 = apply_style(op, s1), apply_style(op, s2)
        else:
            raw1, raw2 = i1, i2
            low1, low2 = s1, s2
        if flow_source == "scored":
            raw = consistency_score(raw1, raw2, mu, solver)
            low = consistency_score(low1, low2, mu, solver)
            score_raw, score_low = raw.score, low.score
            degenerate = raw.degenerate
        else:
            raw_flow = consistency_score(i1, i2, mu, solver)
            low_flow = consistency_score(s1, s2, mu, solver)
            score_raw = residual_score(raw1, raw2, raw_flow.flow, solver.boundary)
            score_low = residual_score(low1, low2, low_flow.flow, solver.boundary)
            degenerate = raw_flow.degenerate
        degenerate = degenerate or score_raw <= DEGENERATE_SCORE
        return TrialOutcome(index=index, score_raw=score_raw,
                            score_smoothed=score_low, degenerate=degenerate)

    indices = range(trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = tuple(pool.map(run_trial, indices))
    else:
        outcomes = tuple(run_trial(i) for i in indices)
    return TrialReport(
        styled=styled, flow_source=flow_source, trials=trials, seed=gen.seed,
        mu=float(mu), sigma=cfg.sigma, boundary=cfg.boundary.value,
        height=gen.height, width=gen.width, outcomes=outcomes,
    )


# ---------------------------------------------------------------------------
# Small-mu expansion of the data-term projector, checked against dense math.
# ---------------------------------------------------------------------------


def _exact_projection(mu: float, e_bar: np.ndarray, u_bar: np.ndarray,
                      sigma_tilde: np.ndarray, b: np.ndarray) -> np.ndarray:
    """D(A) b without approximation, via block elimination.

    In the Laplacian eigenbasis the system splits into the well-conditioned
    eigenvalue block and the 2-dimensional constant block whose entries all
    carry a factor mu. Eliminating the constant block analytically cancels
    that factor, so nothing ill-conditioned is ever inverted; a plain
    pseudo-inverse of the full matrix would drown the O(mu^2) tail this
    function exists to measure.
    """
    we = e_bar.T                      # 2 x n
    wu = u_bar.T                      # 2(n-1) x n
    gram_e = we @ we.T
    gram_e_pinv = np.linalg.pinv(gram_e, hermitian=True)
    cross = wu @ we.T                 # 2(n-1) x 2
    reduced = np.diag(sigma_tilde) + mu * (wu @ wu.T - cross @ gram_e_pinv @ cross.T)
    rhs = wu @ b - cross @ (gram_e_pinv @ (we @ b))
    y_u = np.linalg.solve(reduced, rhs)
    wu_part = wu.T @ y_u
    return (mu * wu_part
            + we.T @ (gram_e_pinv @ (we @ b))
            - mu * (we.T @ (gram_e_pinv @ (we @ wu_part))))


@dataclass(frozen=True, eq=False)
class ExpansionReport:
    """Exact vs first-order-in-mu application of the data-term projector.

    exact is D(A) b computed densely without approximation; approx is the
    zeroth-order projector onto the span of the stacked gradients plus mu
    times the Laplacian-pseudo-inverse correction. error_norm is their
    2-norm difference, which shrinks quadratically in mu.
    """

    mu: float
    exact: np.ndarray
    approx: np.ndarray
    error_norm: float
    grad_const_basis: np.ndarray
    grad_eigen_basis: np.ndarray
    laplacian_eigenvalues: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "mu": self.mu,
            "error_norm": self.error_norm,
            "exact_norm": float(np.linalg.norm(self.exact)),
            "approx_norm": float(np.linalg.norm(self.approx)),
        }


def small_mu_expansion(prob: FlowProblem, max_pixels: int = 144) -> ExpansionReport:
    """Compare D(A) b against its first-order expansion in mu.

    D(A) = mu A^T (mu A A^T + L (x) I2)^{-1} A applied to b. For small mu
    this equals the orthogonal projector onto the column span of
    E = A^T (1 (x) I2) plus a mu-linear correction built from the Laplacian
    pseudo-inverse:

        D(A) ~ P_E + mu (I - P_E) Lp (I - P_E),   Lp = A^T (L^+ (x) I2) A,

    with an O(mu^2) remainder. The doubly-projected P_E Lp P_E part of the
    correction is easy to drop when expanding the Schur blocks, but without
    it the remainder is only O(mu); it costs nothing on vectors P_E kills,
    which is all the contraction argument ever applies this to.

    Dense eigendecompositions keep this honest, so grids are capped at
    max_pixels nodes. Rank-deficient E^T E (for example a pure ramp image)
    is handled with a pseudo-inverse; an all-zero gradient field has no
    data term at all and raises.
    """
    n = prob.b.size
    if n > max_pixels:
        raise ConfigError(f"expansion check is dense; grid has {n} pixels, cap is {max_pixels}")
    if prob.degenerate:
        raise DegenerateProblemError(
            "all gradients are zero: the data term is empty and E^T E is singular")

    b = prob.b.ravel()
    lap = prob.laplacian.matrix.toarray()
    eigvals, eigvecs = np.linalg.eigh(lap)
    positive = eigvals > 1e-9 * max(eigvals.max(), 1.0)
    if np.count_nonzero(~positive) != 1:
        raise ConfigError("expansion assumes a connected grid with exactly one "
                          f"zero Laplacian eigenvalue, found {np.count_nonzero(~positive)}")
    const_vec = eigvecs[:, ~positive][:, 0]
    pos_vecs = eigvecs[:, positive]
    pos_vals = eigvals[positive]

    gradients = np.stack([prob.a_x.ravel(), prob.a_y.ravel()], axis=1)  # rows A(p)^T
    e_bar = gradients * const_vec[:, None]                  # A^T (v1 (x) I2)
    u_bar = np.zeros((n, 2 * pos_vecs.shape[1]))
    u_bar[:, 0::2] = gradients[:, :1] * pos_vecs
    u_bar[:, 1::2] = gradients[:, 1:] * pos_vecs

    sigma_tilde = np.repeat(pos_vals, 2)
    exact = _exact_projection(prob.mu, e_bar, u_bar, sigma_tilde, b)

    gram = e_bar.T @ e_bar
    projector = e_bar @ np.linalg.pinv(gram, hermitian=True) @ e_bar.T
    lap_pinv = pos_vecs @ np.diag(1.0 / pos_vals) @ pos_vecs.T
    lp = gradients[:, :1] * lap_pinv * gradients[:, :1].T \
        + gradients[:, 1:] * lap_pinv * gradients[:, 1:].T
    complement = np.eye(n) - projector
    correction = complement @ lp @ complement
    approx = projector @ b + prob.mu * (correction @ b)

    return ExpansionReport(
        mu=prob.mu,
        exact=exact,
        approx=approx,
        error_norm=float(np.linalg.norm(exact - approx)),
        grad_const_basis=e_bar,
        grad_eigen_basis=u_bar,
        laplacian_eigenvalues=pos_vals,
    )
