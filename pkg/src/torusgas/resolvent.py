"""Resolvent solves on the truncated subset space and what they yield.

The shifted equation (shift - generator image) f = current is solved per
(density, direction, shift) on a packed space; the density-dependent
diffusion matrix is read off the single-point coefficients and extrapolated
linearly to zero shift, with the extrapolation spread reported as the
uncertainty.  Also here: the Dirichlet form, the regularized negative-order
squared norm, the degree-one seminorm, the residual split, and the bundle
type serialized for the PDE stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, bicgstab, cg, lgmres

from .errors import ConfigError, InvariantViolation
from .kernels import KernelAnalysis
from .packed import PackedOperator, PackedSpace, assemble
from .subsets import TruncationParams


def build_engine(analysis: KernelAnalysis, trunc: TruncationParams) -> PackedOperator:
    space = PackedSpace(analysis.dimension, trunc)
    return assemble(space, analysis)


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    translation_violation: float
    clipped_outflow: float
    residual_history: tuple = ()


def _iterate(matvec, size: int, b: np.ndarray, x0, tol: float):
    """Krylov solve with a residual polish loop.

    Returns (solution, residual, iterations, per-attempt residual history).
    """
    op = LinearOperator((size, size), matvec=matvec)
    x = x0
    total_iters = 0
    history = []
    for attempt in range(4):
        counter = {"n": 0}

        def cb(_xk):
            counter["n"] += 1

        x, info = bicgstab(op, b, x0=x, rtol=0.0, atol=tol / 4.0,
                           maxiter=max(2000, 40 * int(np.sqrt(size))), callback=cb)
        total_iters += counter["n"]
        if info < 0 or not np.all(np.isfinite(x)):
            x, info = lgmres(op, b, x0=x0 if x0 is not None else None,
                             rtol=0.0, atol=tol / 4.0, maxiter=2000)
            total_iters += 2000
        resid = float(np.linalg.norm(matvec(x) - b))
        history.append(resid)
        if resid <= tol:
            return x, resid, total_iters, tuple(history)
        tol_inner = tol / (10.0 ** (attempt + 1))
        x, _ = lgmres(op, b, x0=x, rtol=0.0, atol=tol_inner, maxiter=500)
        total_iters += 500
        resid = float(np.linalg.norm(matvec(x) - b))
        history.append(resid)
        if resid <= tol:
            return x, resid, total_iters, tuple(history)
    return x, resid, total_iters, tuple(history)


def _dense_resolvent(engine: PackedOperator, alpha: float, shift: float,
                     b: np.ndarray) -> np.ndarray:
    """Direct sparse factorization of the shifted operator (small bases)."""
    import scipy.sparse as sp
    from scipy.sparse.linalg import splu

    space = engine.space
    chi = alpha * (1.0 - alpha)
    cd = 1.0 - 2.0 * alpha
    engine._compose(cd)
    mat = sp.csr_matrix((engine._buf.copy(), engine.keep.indices,
                         engine.keep.indptr), shape=engine.keep.shape)
    mat = mat + sp.diags(engine.diag_even + cd * engine.diag_odd)
    mat = mat + np.sqrt(chi) * engine.updown
    mat = shift * sp.identity(space.size, format="csr") - mat
    return splu(mat.tocsc()).solve(b)


def resolvent_solve(engine: PackedOperator, alpha: float, shift: float,
                    direction: int, x0: np.ndarray | None = None):
    """Solve (shift - full operator) f = current for one direction.

    Returns (vector, SolveInfo).  The empty set never enters the space, so
    its value stays zero; the translation-identity violation of the solution
    is enforced as a postcondition and the clipped image outflow reported.
    """
    if shift <= 0.0:
        raise ConfigError("resolvent shift must be positive")
    space = engine.space
    b = space.current_vector(engine.analysis, direction)
    tol = space.trunc.solver_tol
    if not np.any(b):
        zero = np.zeros(space.size)
        return zero, SolveInfo(0, 0.0, 0.0, 0.0)

    def matvec(x):
        return engine.resolvent_matvec(x, alpha, shift)

    if 0 < space.size <= space.trunc.dense_threshold:
        x = _dense_resolvent(engine, alpha, shift, b)
        resid = float(np.linalg.norm(matvec(x) - b))
        iters, history = 0, (resid,)
    else:
        x, resid, iters, history = _iterate(matvec, space.size, b, x0, tol)
    if resid > max(tol, 1e-8):
        raise InvariantViolation(
            f"resolvent solve stalled: residual {resid:g} above tolerance {tol:g}; "
            f"history {history}")
    violation = translation_violation_packed(space, x)
    if violation > 1e-8:
        raise InvariantViolation(
            f"solution violates the translation identity by {violation:g}")
    clipped = engine.clipped_outflow(x)
    return x, SolveInfo(iters, resid, violation, clipped, history)


def translation_violation_packed(space: PackedSpace, x: np.ndarray,
                                 sample: int = 4000) -> float:
    """Max |f(A) - f(shifted A)| over member shifts, sampled for big spaces."""
    rng = np.random.default_rng(0)
    worst = 0.0
    from .subsets import shift_set

    for n in range(1, space.trunc.max_degree + 1):
        nn = len(space.sets[n])
        if nn == 0:
            continue
        take = np.arange(nn) if nn <= sample else rng.choice(nn, sample, replace=False)
        block = x[space.offsets[n]:space.offsets[n] + nn]
        for i in take:
            if block[i] == 0.0:
                continue
            A = tuple(tuple(int(c) for c in p) for p in space.pool[space.sets[n][i]])
            for z in A:
                g = space.index_of_subset(shift_set(A, z))
                other = x[g] if g >= 0 else 0.0
                worst = max(worst, abs(block[i] - other))
    return worst


def h1_form_packed(engine: PackedOperator, x: np.ndarray, y: np.ndarray) -> float:
    """Dirichlet form <x, (-sym part) y> in the degree-weighted product."""
    return engine.space.dot(x, -engine.apply_sym(y))


def h_minus_one_sq(engine: PackedOperator, b: np.ndarray, reg: float,
                   x0: np.ndarray | None = None):
    """Regularized squared negative-order norm <b, u>, (reg - sym part) u = b.

    The plain counting-basis matrix of the symmetric part is symmetric, so
    conjugate gradients apply directly; the degree weights only enter the
    final pairing.
    """
    if reg <= 0.0:
        raise ConfigError("regularization must be positive")
    space = engine.space
    if not np.any(b):
        return 0.0, np.zeros(space.size)

    def matvec(x):
        return reg * x - engine.apply_sym(x)

    op = LinearOperator((space.size, space.size), matvec=matvec)
    tol = space.trunc.solver_tol
    u, info = cg(op, b, x0=x0, rtol=0.0, atol=tol,
                 maxiter=max(2000, 40 * int(np.sqrt(space.size))))
    resid = float(np.linalg.norm(matvec(u) - b))
    if resid > max(10 * tol, 1e-8) or info < 0:
        raise InvariantViolation(f"negative-norm solve stalled at residual {resid:g}")
    value = space.dot(b, u)
    return max(value, 0.0), u


def h_minus_one_sq_dual(f, analysis: KernelAnalysis, trunc: TruncationParams,
                        reg: float, engine: PackedOperator | None = None) -> float:
    """Dictionary-function surface for the regularized negative-order norm."""
    if engine is None:
        engine = build_engine(analysis, trunc)
    b = engine.space.vector_from_dual(f)
    value, _ = h_minus_one_sq(engine, b, reg)
    return value


def extrapolate_to_zero(shifts, values):
    """Linear-in-shift extrapolation from the two smallest shifts, plus spread.

    Returns (limit, spread) where the spread is the difference against the
    extrapolation from the next shift pair (single-pair sequences return
    their last value with infinite-like spread 0).
    """
    order = np.argsort(shifts)[::-1]  # descending
    s = np.asarray(shifts, dtype=np.float64)[order]
    v = np.asarray(values, dtype=np.float64)[order]
    if len(s) == 1:
        return float(v[0]), 0.0
    def pair(i, j):
        return float(v[j] - s[j] * (v[i] - v[j]) / (s[i] - s[j]))
    best = pair(len(s) - 2, len(s) - 1)
    if len(s) >= 3:
        prev = pair(len(s) - 3, len(s) - 2)
        return best, abs(best - prev)
    return best, abs(best - float(v[-1]))


def diffusion_from_solutions(analysis: KernelAnalysis, alpha: float,
                             singleton_coeffs_by_shift: dict):
    """Diffusion matrix from the degree-one coefficients of the solutions.

    D_ij(shift) = alpha sigma_ij - chi(alpha) sum_z a(z) z_j f_i(z); the
    returned matrix is the linear extrapolation to zero shift and the spread
    matrix tracks the extrapolation uncertainty entrywise.
    """
    d = analysis.dimension
    sigma = analysis.covariance
    chi = alpha * (1.0 - alpha)
    shifts = sorted(singleton_coeffs_by_shift.keys(), reverse=True)
    per_shift = {}
    for lam in shifts:
        mat = alpha * sigma.copy()
        coeffs = singleton_coeffs_by_shift[lam]  # list over directions of dicts
        for i in range(d):
            for z, a in zip(analysis.sym_offsets, analysis.asym_weights):
                if a == 0.0:
                    continue
                fz = coeffs[i].get(tuple(int(c) for c in z), 0.0)
                for j in range(d):
                    mat[i, j] -= chi * float(a) * float(z[j]) * fz
        per_shift[lam] = mat
    limit = np.zeros((d, d))
    spread = np.zeros((d, d))
    vals = np.array([per_shift[lam] for lam in shifts])
    for i in range(d):
        for j in range(d):
            limit[i, j], spread[i, j] = extrapolate_to_zero(shifts, vals[:, i, j])
    return limit, spread, per_shift


def hydrodynamic_matrix(alpha: float, diffusion: np.ndarray,
                        sigma: np.ndarray) -> np.ndarray:
    """PDE coefficient matrix: diffusion plus half (1-2 alpha) covariance."""
    return diffusion + 0.5 * (1.0 - 2.0 * alpha) * np.asarray(sigma)


def j_matrix(beta: float, diffusion: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Quadratic-coupling matrix 2 beta (1-beta) (D(beta) - beta sigma)."""
    return 2.0 * beta * (1.0 - beta) * (np.asarray(diffusion) - beta * np.asarray(sigma))


def degree_one_seminorm(c, alpha: float, sigma) -> dict:
    """Closed form of the degree-one variational seminorm.

    For a first-moment vector c the supremum over slopes evaluates to
    (2/chi) c . sigma^+ c; components of c outside the range of sigma make
    the supremum infinite (flagged, not raised).
    """
    c = np.asarray(c, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    chi = alpha * (1.0 - alpha)
    if chi <= 0.0:
        raise ConfigError("degree-one seminorm needs a density inside (0, 1)")
    pinv = np.linalg.pinv(sigma, rcond=1e-12)
    proj = sigma @ pinv @ c
    scale = max(float(np.linalg.norm(c)), 1e-300)
    unbounded = bool(np.linalg.norm(c - proj) > 1e-10 * scale and np.any(c != 0.0))
    value = float(2.0 / chi * c @ pinv @ c)
    return {"value": value, "unbounded": unbounded}


def residual_triple_norm(engine: PackedOperator, alpha: float, direction: int,
                         diffusion_row: np.ndarray, h: np.ndarray,
                         reg: float) -> dict:
    """Split approximation error of a candidate correction h.

    The degree-two-and-up part is chi^2 times the squared negative-order
    norm of (current + full-operator image of h); the degree-one part is the
    closed-form seminorm of the first-moment vector left over after the
    diffusion row is subtracted.
    """
    space = engine.space
    analysis = engine.analysis
    chi = alpha * (1.0 - alpha)
    b = space.current_vector(analysis, direction)
    r = b + engine.apply_full(h, alpha)
    high_sq, _ = h_minus_one_sq(engine, r, reg)
    high = chi * chi * high_sq

    d = analysis.dimension
    sigma = analysis.covariance
    coeffs = space.singleton_coefficients(h)
    bvec = np.zeros(d)
    for j in range(d):
        bvec[j] = diffusion_row[j] - alpha * sigma[direction, j]
        for z, a in zip(analysis.sym_offsets, analysis.asym_weights):
            if a != 0.0:
                bvec[j] += chi * float(a) * float(z[j]) * coeffs.get(
                    tuple(int(c) for c in z), 0.0)
    low = degree_one_seminorm(chi * bvec, alpha, sigma)
    return {"degree_two_plus": high, "degree_one": low["value"],
            "degree_one_unbounded": low["unbounded"],
            "total": high + low["value"]}


def mobility_gap(analysis: KernelAnalysis, alpha: float, v: np.ndarray,
                 h1_by_shift: dict, diffusion_by_shift: dict) -> dict:
    """Consistency gap between the mobility form and the Dirichlet form.

    Left side: chi v.(D - alpha sigma) v; right side: the Dirichlet form of
    the susceptibility-scaled combination chi sum_j v_j f_j (whose value per
    shift is supplied).  Both sides are extrapolated to zero shift the same
    way before comparing.
    """
    sigma = analysis.covariance
    chi = alpha * (1.0 - alpha)
    v = np.asarray(v, dtype=np.float64)
    shifts = sorted(h1_by_shift.keys(), reverse=True)
    left_vals = [float(chi * v @ (diffusion_by_shift[lam] - alpha * sigma) @ v)
                 for lam in shifts]
    right_vals = [chi * chi * h1_by_shift[lam] for lam in shifts]
    left, _ = extrapolate_to_zero(shifts, left_vals)
    right, _ = extrapolate_to_zero(shifts, right_vals)
    gap = abs(left - right) / max(abs(left), abs(right), 1e-12)
    return {"left": left, "right": right, "gap": gap}


@dataclass
class DiffusionResult:
    """Diffusion and PDE matrices over a density grid, with diagnostics."""

    dimension: int
    alphas: list
    sigma: np.ndarray
    diffusion: dict          # alpha -> (d, d)
    hydro: dict              # alpha -> (d, d)
    coupling: dict           # alpha -> (d, d)
    spread: dict             # alpha -> (d, d) extrapolation spread
    per_shift: dict          # alpha -> {shift: (d, d)}
    energy: dict             # alpha -> {shift: [per-direction energy]}
    mobility: dict           # alpha -> {vector label: gap record}
    residuals: dict          # alpha -> per-direction residual splits
    solver: dict             # iteration/violation/clip diagnostics
    truncation: dict
    kernel_entries: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def symmetry_gap(self) -> float:
        worst = 0.0
        for mat in self.diffusion.values():
            worst = max(worst, float(np.abs(mat - mat.T).max()))
        return worst

    def min_eig_above_mobility_floor(self) -> float:
        """Smallest eigenvalue of D(alpha) - alpha sigma over the grid."""
        worst = np.inf
        for alpha in self.alphas:
            m = self.diffusion[alpha] - alpha * self.sigma
            m = 0.5 * (m + m.T)
            worst = min(worst, float(np.linalg.eigvalsh(m).min()))
        return worst

    def to_json_dict(self) -> dict:
        def mat(m):
            return [[float(x) for x in row] for row in np.asarray(m)]

        return {
            "dimension": self.dimension,
            "alphas": [float(a) for a in self.alphas],
            "sigma": mat(self.sigma),
            "diffusion": {repr(float(a)): mat(self.diffusion[a]) for a in self.alphas},
            "hydro": {repr(float(a)): mat(self.hydro[a]) for a in self.alphas},
            "coupling": {repr(float(a)): mat(self.coupling[a]) for a in self.alphas},
            "spread": {repr(float(a)): mat(self.spread[a]) for a in self.alphas},
            "per_shift": {repr(float(a)): {repr(float(s)): mat(m)
                                           for s, m in self.per_shift[a].items()}
                          for a in self.alphas},
            "energy": {repr(float(a)): {repr(float(s)): list(map(float, e))
                                        for s, e in self.energy[a].items()}
                       for a in self.alphas},
            "mobility": {repr(float(a)): self.mobility[a] for a in self.alphas},
            "residuals": {repr(float(a)): self.residuals[a] for a in self.alphas},
            "solver": self.solver,
            "truncation": self.truncation,
            "kernel_entries": self.kernel_entries,
            "notes": self.notes,
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "DiffusionResult":
        alphas = [float(a) for a in data["alphas"]]

        def parse(entry):
            return {float(k): np.array(v) for k, v in entry.items()}

        return cls(
            dimension=int(data["dimension"]),
            alphas=alphas,
            sigma=np.array(data["sigma"]),
            diffusion=parse(data["diffusion"]),
            hydro=parse(data["hydro"]),
            coupling=parse(data["coupling"]),
            spread=parse(data["spread"]),
            per_shift={float(k): parse(v) for k, v in data["per_shift"].items()},
            energy={float(k): {float(s): list(e) for s, e in v.items()}
                    for k, v in data["energy"].items()},
            mobility={float(k): v for k, v in data["mobility"].items()},
            residuals={float(k): v for k, v in data["residuals"].items()},
            solver=data["solver"],
            truncation=data["truncation"],
            kernel_entries=data.get("kernel_entries", []),
            notes=data.get("notes", []),
        )

    @classmethod
    def load_json(cls, path) -> "DiffusionResult":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))

    def save_csv(self, path):
        d = self.dimension
        cols = ["alpha"]
        for tag in ("D", "a"):
            cols += [f"{tag}_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
        lines = [",".join(cols)]
        for a in self.alphas:
            row = [repr(float(a))]
            row += [repr(float(x)) for x in np.asarray(self.diffusion[a]).reshape(-1)]
            row += [repr(float(x)) for x in np.asarray(self.hydro[a]).reshape(-1)]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def compute_diffusion(analysis: KernelAnalysis, alphas, trunc: TruncationParams,
                      mobility_vectors=None, with_residuals: bool = False,
                      engine: PackedOperator | None = None) -> DiffusionResult:
    """Full pipeline: solve over the density grid and shift sequence.

    Warm starts chain along the shift sequence per (density, direction);
    the per-shift energies, mobility gaps and (optionally) residual splits
    are derived from the same solutions.
    """
    if engine is None:
        engine = build_engine(analysis, trunc)
    space = engine.space
    d = analysis.dimension
    sigma = analysis.covariance
    shifts = sorted(trunc.lambda_seq, reverse=True)
    if mobility_vectors is None:
        mobility_vectors = {}

    diffusion, hydro, coupling, spread = {}, {}, {}, {}
    per_shift_all, energy_all, mobility_all, residuals_all = {}, {}, {}, {}
    solver_stats = {"iterations": 0, "max_residual": 0.0,
                    "max_translation_violation": 0.0, "max_clipped_outflow": 0.0,
                    "space_size": space.size}

    for alpha in alphas:
        alpha = float(alpha)
        chi = alpha * (1.0 - alpha)
        coeffs_by_shift = {}
        energy = {lam: [0.0] * d for lam in shifts}
        h1_by_shift = {lam: 0.0 for lam in shifts}
        sols = {}
        x_prev = {i: None for i in range(d)}
        for lam in shifts:
            coeffs = []
            vecs = []
            for i in range(d):
                x, info = resolvent_solve(engine, alpha, lam, i, x0=x_prev[i])
                x_prev[i] = x
                vecs.append(x)
                coeffs.append(space.singleton_coefficients(x))
                solver_stats["iterations"] += info.iterations
                solver_stats["max_residual"] = max(solver_stats["max_residual"],
                                                   info.residual)
                solver_stats["max_translation_violation"] = max(
                    solver_stats["max_translation_violation"],
                    info.translation_violation)
                solver_stats["max_clipped_outflow"] = max(
                    solver_stats["max_clipped_outflow"], info.clipped_outflow)
                energy[lam][i] = float(lam * space.dot(x, x)
                                       + h1_form_packed(engine, x, x))
            coeffs_by_shift[lam] = coeffs
            sols[lam] = vecs
        dmat, dspread, dm_per_shift = diffusion_from_solutions(
            analysis, alpha, coeffs_by_shift)
        diffusion[alpha] = dmat
        spread[alpha] = dspread
        per_shift_all[alpha] = dm_per_shift
        hydro[alpha] = hydrodynamic_matrix(alpha, dmat, sigma)
        coupling[alpha] = j_matrix(alpha, dmat, sigma)
        energy_all[alpha] = energy

        mob = {}
        for label, v in mobility_vectors.items():
            v = np.asarray(v, dtype=np.float64)
            h1v = {}
            for lam in shifts:
                combo = np.zeros(space.size)
                for i in range(d):
                    combo += v[i] * sols[lam][i]
                h1v[lam] = h1_form_packed(engine, combo, combo)
            mob[label] = mobility_gap(analysis, alpha, v, h1v, dm_per_shift)
        mobility_all[alpha] = mob

        res = {}
        if with_residuals and chi > 0.0:
            lam_min = shifts[-1]
            for i in range(d):
                res[str(i)] = residual_triple_norm(
                    engine, alpha, i, dmat[i], sols[lam_min][i], reg=trunc.reg)
        residuals_all[alpha] = res

    return DiffusionResult(
        dimension=d,
        alphas=[float(a) for a in alphas],
        sigma=sigma,
        diffusion=diffusion,
        hydro=hydro,
        coupling=coupling,
        spread=spread,
        per_shift=per_shift_all,
        energy=energy_all,
        mobility=mobility_all,
        residuals=residuals_all,
        solver=solver_stats,
        truncation={"radius": trunc.radius, "max_degree": trunc.max_degree,
                    "solver_tol": trunc.solver_tol,
                    "lambda_seq": list(trunc.lambda_seq),
                    "space_size": space.size},
        kernel_entries=analysis.kernel.to_entries(),
    )
