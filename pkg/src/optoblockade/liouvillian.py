"""Lindblad generator, steady state and time evolution.

Density matrices are vectorized row-major (``rho.ravel()``), so that
``vec(A X B) = (A ⊗ B^T) vec(X)`` and the coherent part of the generator is
``-i (H ⊗ I - I ⊗ H^T)``. The trace functional is ``vec(I)`` in either
ordering.

Every generator built here also remembers its split into a non-Hermitian
effective Hamiltonian and sandwich (jump) operators; the iterative solvers
use that split as a preconditioner.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.constants as const
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _krylov
from .hilbert import SpaceDims, embed, identity, pauli
from .model import Hamiltonian, SystemParams, _ops, angular, build_rotating_hamiltonian

__all__ = [
    "DegenerateSteadyStateError",
    "DensityMatrix",
    "PositivityError",
    "SolverError",
    "StiffnessError",
    "Superoperator",
    "ThermalBath",
    "TruncationDivergenceError",
    "assemble_liouvillian",
    "baths_for",
    "converge_truncation",
    "dissipator",
    "evolve",
    "liouvillian_for",
    "qubit_dissipator",
    "relaxation_time",
    "solve_point",
    "steady_state",
    "thermal_occupation",
]

log = logging.getLogger(__name__)

DISSIPATOR_FORMS = ("standard", "printed")

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = -1e-8
RESIDUAL_TOL = 1e-10
COND_LIMIT = 1e14
DEGENERACY_TOL = 1e-8
DENSE_SVD_LIMIT = 4096

N_CAV_CAP = 12
N_MECH_CAP = 40
GMRES_RESTARTS = 3  # of 100 iterations each
REFINE_STEPS = 2
REFINE_TOL = 1e-13  # true relative residual of the augmented system
POPULATION_RATIO_RESCALE = 0.1  # rescale photon blocks below this P1/P0
POPULATION_RATIO_FLOOR = 1e-8
POPULATION_NOISE = 1e-12  # first-pass populations below this are not trusted
POPULATION_SCALE_FLOOR = 1e-30  # deeper rescaling only worsens conditioning


class SolverError(RuntimeError):
    """Steady-state or evolution failure; carries the residual when known."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateSteadyStateError(SolverError):
    pass


class PositivityError(SolverError):
    pass


class StiffnessError(SolverError):
    pass


class TruncationDivergenceError(SolverError):
    pass


def thermal_occupation(nu: float, temperature: float, formula: str = "bose_einstein") -> float:
    """Mean thermal quanta of a mode at ``nu`` MHz and ``temperature`` kelvin.

    ``formula="printed"`` evaluates exp(-h nu / kT) without the -1; it is kept
    for comparison only and is not a physical occupation.
    """
    if not nu > 0:
        raise ValueError(f"frequency must be > 0, got {nu!r}")
    if temperature < 0:
        raise ValueError(f"temperature must be >= 0, got {temperature!r}")
    if temperature == 0:
        return 0.0
    x = const.h * nu * 1e6 / (const.k * temperature)
    if formula not in ("bose_einstein", "printed"):
        raise ValueError(f"unknown occupation formula {formula!r}")
    if x > 700:  # exp(-x) underflows to zero anyway
        return 0.0
    return 1.0 / math.expm1(x) if formula == "bose_einstein" else math.exp(-x)


@dataclass(frozen=True)
class ThermalBath:
    """Damping channel with angular rate ``rate`` and mean occupation."""

    rate: float
    occupation: float = 0.0

    def __post_init__(self):
        if not (self.rate >= 0 and self.occupation >= 0):
            raise ValueError("bath rate and occupation must be >= 0")


def _spre(op):
    return sp.kron(op, identity(op.shape[0]), format="csr")


def _spost(op):
    return sp.kron(identity(op.shape[0]), sp.csr_matrix(op).T, format="csr")


def _sandwich(op):
    """rho -> op rho op^dagger."""
    op = sp.csr_matrix(op)
    return sp.kron(op, op.conj(), format="csr")


@dataclass(frozen=True)
class Superoperator:
    """Sparse generator acting on row-major vectorized density matrices.

    ``heff`` and ``jumps`` are optional: when present,
    ``matrix == -i (heff ⊗ I - I ⊗ conj(heff)) + sum_k c_k ⊗ conj(c_k)``.
    """

    matrix: sp.csr_matrix
    dim: int
    heff: sp.csr_matrix | None = field(default=None, repr=False, compare=False)
    jumps: tuple = field(default=(), repr=False, compare=False)

    @classmethod
    def from_parts(cls, heff, jumps=()) -> "Superoperator":
        heff = sp.csr_matrix(heff, dtype=complex)
        dim = heff.shape[0]
        mat = -1j * (_spre(heff) - _spost(heff.getH()))
        for c in jumps:
            mat = mat + _sandwich(c)
        mat = sp.csr_matrix(mat)
        mat.eliminate_zeros()
        return cls(mat, dim, heff, tuple(sp.csr_matrix(c, dtype=complex) for c in jumps))

    @property
    def has_parts(self) -> bool:
        return self.heff is not None

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if self.dim != other.dim:
            raise ValueError("superoperator dimensions differ")
        mat = sp.csr_matrix(self.matrix + other.matrix)
        if self.has_parts and other.has_parts:
            return Superoperator(mat, self.dim, sp.csr_matrix(self.heff + other.heff),
                                 self.jumps + other.jumps)
        return Superoperator(mat, self.dim)

    def apply(self, rho) -> np.ndarray:
        rho = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
        return (self.matrix @ rho.ravel()).reshape(self.dim, self.dim)

    def max_entry(self) -> float:
        return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0

    def trace_defect(self) -> float:
        """max |vec(I)^dagger L|; zero for a trace-preserving generator."""
        return float(np.abs(_trace_row(self.dim) @ self.matrix).max())


@dataclass
class DensityMatrix:
    matrix: np.ndarray
    dims: SpaceDims | None = None
    residual: float | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise ValueError("density matrix must be square")
        if self.dims is not None and self.dims.total_dim != n:
            raise ValueError("density matrix does not match the space dimension")

    @classmethod
    def pure(cls, index: int, dims: SpaceDims) -> "DensityMatrix":
        rho = np.zeros((dims.total_dim, dims.total_dim), dtype=complex)
        rho[index, index] = 1.0
        return cls(rho, dims)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.conj().T).max())

    def min_eigenvalue(self) -> float:
        return float(la.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def check(self, trace_tol=TRACE_TOL) -> "DensityMatrix":
        """Raise unless Hermitian, unit trace and positive within tolerance."""
        herm = self.hermiticity_error()
        if herm > HERMITIAN_TOL:
            raise SolverError(f"density matrix not Hermitian ({herm:.2e})")
        if abs(self.trace - 1) > trace_tol:
            raise SolverError(f"density matrix trace {self.trace:.12g} differs from 1")
        lam = self.min_eigenvalue()
        if lam < POSITIVITY_TOL:
            raise PositivityError(f"density matrix has eigenvalue {lam:.3e} < {POSITIVITY_TOL}")
        return self


def _trace_row(dim: int) -> np.ndarray:
    row = np.zeros(dim * dim)
    row[:: dim + 1] = 1.0
    return row


def dissipator(op, bath: ThermalBath, form: str = "standard") -> Superoperator:
    """Thermal damping channel for a lowering operator ``op``.

    ``standard`` is rate * ((n+1) D[op] + n D[op^dagger]) with
    D[c] rho = c rho c^dag - {c^dag c, rho} / 2. ``printed`` uses the thermal
    block n * (op rho op^dag + op^dag rho op - op^dag op rho - rho op^dag op)
    literally; that block is not trace preserving at n > 0 and is kept only
    for sensitivity comparisons.
    """
    op = sp.csr_matrix(op, dtype=complex)
    if op.shape[0] != op.shape[1]:
        raise ValueError("jump operator must be square")
    if form not in DISSIPATOR_FORMS:
        raise ValueError(f"unknown dissipator form {form!r}")
    dim = op.shape[0]
    if bath.rate == 0:
        return Superoperator.from_parts(sp.csr_matrix((dim, dim), dtype=complex))
    gamma, nbar = bath.rate, bath.occupation
    opd = op.getH().tocsr()
    jumps = [math.sqrt(gamma * (nbar + 1)) * op]
    if nbar:
        jumps.append(math.sqrt(gamma * nbar) * opd)
    if form == "standard":
        heff = -0.5j * sum((c.getH() @ c for c in jumps), sp.csr_matrix((dim, dim)))
    else:
        heff = -1j * gamma * (0.5 + nbar) * (opd @ op)
    return Superoperator.from_parts(heff, jumps)


def qubit_dissipator(bath: ThermalBath, d: SpaceDims, form: str = "standard") -> Superoperator:
    return dissipator(embed(pauli("minus"), "qubit", d), bath, form)


def assemble_liouvillian(H: Hamiltonian, baths, form: str = "standard") -> Superoperator:
    """Generator for ``H`` with (photon, phonon, qubit) baths, in that order."""
    if not H.hermitian or H.hermiticity_error() > 1e-12:
        raise ValueError("the master equation needs a Hermitian Hamiltonian")
    d = H.dims
    if d is None:
        raise ValueError("Hamiltonian carries no SpaceDims")
    ops = _ops(d)
    bath_a, bath_b, bath_q = baths
    L = Superoperator.from_parts(H.matrix)
    L = L + dissipator(ops["a"], bath_a, form)
    L = L + dissipator(ops["b"], bath_b, form)
    L = L + qubit_dissipator(bath_q, d, form)
    return L


def baths_for(p: SystemParams, occupation_formula: str = "bose_einstein"):
    """Angular-rate baths; the photon bath is always at zero occupation."""

    def occ(nu):
        if p.temperature == 0 or nu <= 0:
            return 0.0
        return thermal_occupation(nu, p.temperature, occupation_formula)

    return (
        ThermalBath(angular(p.gamma_a), 0.0),
        ThermalBath(angular(p.gamma_b), occ(p.nu_b)),
        ThermalBath(angular(p.gamma_q), occ(p.nu_q)),
    )


def liouvillian_for(p: SystemParams, d: SpaceDims, form: str = "standard",
                    occupation_formula: str = "bose_einstein") -> Superoperator:
    return assemble_liouvillian(build_rotating_hamiltonian(p, d),
                                baths_for(p, occupation_formula), form)


# ---------------------------------------------------------------- steady state


def _finalize(L: Superoperator, vec, dims) -> DensityMatrix:
    rho = np.asarray(vec).reshape(L.dim, L.dim)
    tr = np.trace(rho)
    if not np.isfinite(tr) or abs(tr) == 0:
        raise SolverError("candidate steady state has zero or non-finite trace")
    rho = rho / tr
    rho = 0.5 * (rho + rho.conj().T)
    scale = max(L.max_entry(), 1e-300)
    residual = float(np.linalg.norm(L.matrix @ rho.ravel()) / scale)
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise SolverError(f"steady-state residual {residual:.3e} exceeds {RESIDUAL_TOL}",
                          residual=residual)
    return DensityMatrix(rho, dims, residual).check()


def _solve_iterative(L: Superoperator, x0=None, weights=None):
    """GMRES on L + u vec(I)^T, preconditioned by the inverse no-jump part.

    With ``weights`` s the solve runs on rho' = S^-1 rho S^-1, S = diag(s).
    The similarity keeps the Lindblad form (K -> S^-1 K S) and lets GMRES
    resolve populations many orders below the largest one.
    """
    n = L.dim * L.dim
    M = L.matrix
    P = _krylov.SylvesterPreconditioner(L.heff).operator(shift=0.0, scale=-1.0)
    if weights is not None:
        # the preconditioner is conjugated rather than rebuilt: the
        # eigenvectors of S^-1 K S are badly conditioned
        w = np.kron(weights, weights)
        M = sp.diags(1.0 / w) @ M @ sp.diags(w)
        P0 = P
        P = spla.LinearOperator((n, n), matvec=lambda x: P0.matvec(w * x) / w, dtype=complex)
        if x0 is not None:
            # noise in the warm start would be amplified by 1/w
            keep = np.abs(x0) > POPULATION_NOISE * np.abs(x0).max()
            x0 = np.where(keep, x0 / np.where(keep, w, 1.0), 0.0)
    tr = _trace_row(L.dim)
    row = tr if weights is None else tr * w
    u = tr * (max(abs(M).max(), 1.0) / L.dim)

    def matvec(x):
        return M @ x + u * (row @ x)

    A = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
    x, info, its = _krylov.gmres_solve(A, u, P, x0=x0, maxiter=GMRES_RESTARTS)
    log.debug("iterative steady state: info=%d after %d iterations", info, its)
    # GMRES stops on the preconditioned residual; refine on the true one and
    # keep a step only if it lowers that residual
    bnorm = np.linalg.norm(u)
    r = u - matvec(x)
    rnorm = np.linalg.norm(r)
    for _ in range(REFINE_STEPS):
        if rnorm <= REFINE_TOL * bnorm:
            break
        dx, info, its = _krylov.gmres_solve(A, r, P, maxiter=GMRES_RESTARTS)
        log.debug("refinement: info=%d after %d iterations", info, its)
        r_new = u - matvec(x + dx)
        if not np.linalg.norm(r_new) < rnorm:
            break
        x, r, rnorm = x + dx, r_new, np.linalg.norm(r_new)
    return x if weights is None else x * w


def _photon_weights(vec, dims: SpaceDims):
    """Per-state weights sqrt(P_n / P_0) from a first-pass photon distribution.

    Populations below the first pass's noise level are extended
    geometrically with the last resolved ratio. Returns None when no
    rescaling is needed (P_1 / P_0 not small).
    """
    dim = dims.total_dim
    diag = np.real(np.asarray(vec).reshape(dim, dim).diagonal())
    block = 2 * dims.n_mech
    pops = diag.reshape(dims.n_cav, block).sum(axis=1)
    if not np.isfinite(pops).all() or pops[0] <= 0:
        return None
    pops = pops / pops[0]
    if not pops[1] < POPULATION_RATIO_RESCALE:
        return None
    noise = POPULATION_NOISE * np.abs(diag).sum() / pops.size
    scale = np.ones(dims.n_cav)
    ratio = max(pops[1], POPULATION_RATIO_FLOOR)
    for n in range(1, dims.n_cav):
        if pops[n] > noise and pops[n - 1] > noise:
            ratio = min(max(pops[n] / pops[n - 1], POPULATION_RATIO_FLOOR), 1.0)
        scale[n] = max(scale[n - 1] * ratio, POPULATION_SCALE_FLOOR)
    return np.repeat(np.sqrt(scale), block)


def _solve_rescaled(L: Superoperator, dims, x0=None):
    """Iterative solve with photon-number rescaling when populations span decades.

    An unscaled pass fixes the photon distribution; a second pass on the
    rescaled problem resolves the small populations.
    """
    vec = _solve_iterative(L, x0)
    weights = _photon_weights(vec, dims) if dims is not None else None
    if weights is not None:
        vec = _solve_iterative(L, x0, weights)
    return vec


def _solve_direct(L: Superoperator, dims=None):
    """Row-replacement LU solve; returns None if singular or ill-conditioned.

    With ``dims`` the solve is repeated on the photon-rescaled generator
    when the first pass shows small photon populations.
    """
    vec = _solve_direct_weighted(L)
    weights = _photon_weights(vec, dims) if vec is not None and dims is not None else None
    if weights is not None:
        scaled = _solve_direct_weighted(L, weights)
        if scaled is not None:
            vec = scaled
    return vec


def _solve_direct_weighted(L: Superoperator, weights=None):
    dim = L.dim
    M, row = L.matrix, _trace_row(dim)
    if weights is not None:
        w = np.kron(weights, weights)
        M = sp.diags(1.0 / w) @ M @ sp.diags(w)
        row = row * w
    A = sp.vstack([sp.csr_matrix(row), M[1:]], format="csc")
    rhs = np.zeros(dim * dim, dtype=complex)
    rhs[0] = 1.0
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:  # exactly singular
        log.debug("direct steady-state factorization failed: %s", exc)
        return None
    vec = lu.solve(rhs)
    inv = spla.LinearOperator(A.shape, matvec=lu.solve,
                              rmatvec=lambda x: lu.solve(x, trans="H"), dtype=complex)
    cond = spla.norm(A, 1) * spla.onenormest(inv)
    if not np.all(np.isfinite(vec)) or cond > COND_LIMIT:
        log.debug("direct steady-state system ill-conditioned (cond ~ %.2e)", cond)
        return None
    return vec if weights is None else vec * w


def _smallest_singular(L: Superoperator):
    """Two smallest singular values (or |eigenvalues|) and a null vector."""
    if L.matrix.shape[0] <= DENSE_SVD_LIMIT:
        _, s, vh = la.svd(L.matrix.toarray())
        return s[-1], s[-2], vh[-1].conj()
    shift = 1e-9 * max(L.max_entry(), 1.0)
    vals, vecs = spla.eigs(L.matrix.tocsc(), k=2, sigma=shift, which="LM")
    order = np.argsort(np.abs(vals))
    return abs(vals[order[0]]), abs(vals[order[1]]), vecs[:, order[0]]


def steady_state(L: Superoperator, dims: SpaceDims | None = None, *,
                 method: str = "auto", x0=None) -> DensityMatrix:
    """Unit-trace null vector of ``L``.

    Methods
    -------
    ``iterative``
        Preconditioned GMRES on the trace-augmented generator. Needs the
        generator's (heff, jumps) split. Default for large systems.
    ``direct``
        Replace one row of ``L`` by the trace functional and LU-solve.
    ``svd``
        Smallest singular vector; also detects a degenerate null space.

    ``auto`` tries iterative (when available) then direct, then svd. The
    result is trace-normalized, Hermitized and checked for residual,
    Hermiticity, trace and positivity.
    """
    if dims is not None and dims.total_dim != L.dim:
        raise ValueError("dims do not match the superoperator")
    if method not in ("auto", "iterative", "direct", "svd"):
        raise ValueError(f"unknown steady-state method {method!r}")
    if isinstance(x0, DensityMatrix):
        x0 = x0.matrix.ravel()
    chain = {
        "auto": (["iterative"] if L.has_parts and L.dim >= 8 else []) + ["direct", "svd"],
        "iterative": ["iterative"],
        "direct": ["direct", "svd"],
        "svd": ["svd"],
    }[method]
    last_error = None
    for step in chain:
        if step == "iterative":
            if not L.has_parts:
                raise ValueError("iterative solve needs a generator built from parts")
            vec = _solve_rescaled(L, dims, x0)
        elif step == "direct":
            vec = _solve_direct(L, dims)
        else:
            s0, s1, vec = _smallest_singular(L)
            if s1 < DEGENERACY_TOL * max(L.max_entry(), 1.0):
                raise DegenerateSteadyStateError(
                    "null space of the generator is not one-dimensional "
                    f"(smallest singular values {s0:.2e}, {s1:.2e})"
                )
        if vec is None:
            continue
        try:
            return _finalize(L, vec, dims)
        except PositivityError:
            raise
        except SolverError as exc:
            log.debug("steady-state method %s rejected: %s", step, exc)
            last_error = exc
    if last_error is not None:
        raise last_error
    raise SolverError("no steady-state method succeeded")


# ------------------------------------------------------------------ evolution


def relaxation_time(p: SystemParams) -> float:
    """1 / (slowest nonzero angular damping rate) in microseconds."""
    rates = [angular(r) for r in (p.gamma_a, p.gamma_b, p.gamma_q) if r > 0]
    if not rates:
        raise ValueError("no dissipation; no relaxation time")
    return 1.0 / min(rates)


class _InnerSolveFailed(Exception):
    pass


def _shifted_solver(L: Superoperator, gamma: float, precond):
    n = L.dim * L.dim
    M = L.matrix
    if precond is not None:
        P = precond.operator(shift=1.0, scale=-gamma)
        # For trace-preserving L the solution keeps the trace of b, so the
        # slow (steady-state) direction can be deflated with a rank-one term.
        tr = _trace_row(L.dim)
        conserving = L.trace_defect() < 1e-10 * max(L.max_entry(), 1.0)
        u = tr * (gamma * max(L.max_entry(), 1.0) / L.dim) if conserving else 0 * tr

        def matvec(x):
            return x - gamma * (M @ x) + u * (tr @ x)

        A = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)

        def solve(b):
            rhs = b + u * (tr @ b)
            x, info, _ = _krylov.gmres_solve(A, rhs, P, x0=P.matvec(rhs), rtol=1e-13,
                                            restart=100, maxiter=3)
            if info != 0:
                raise _InnerSolveFailed(gamma)
            return x

        return solve
    lu = spla.splu(sp.csc_matrix(sp.identity(n, dtype=complex) - gamma * M))
    return lu.solve


def evolve(L: Superoperator, rho0: DensityMatrix, t: float, *, times=None, tol=1e-10,
           m_max: int = 40, shift_fraction: float = 0.1):
    """Propagate ``rho0`` under ``L`` for a duration ``t`` (microseconds).

    exp(h L) v is evaluated by a shift-and-invert Krylov method with pole
    ``shift_fraction * h``; the step h is adapted (halved when the Krylov
    space fails to converge within ``m_max``, doubled after successes), so
    arbitrarily long horizons cost a bounded number of linear solves. With
    ``times`` (ascending, within [0, t]) the states at those instants are
    returned as a list.
    """
    if t < 0:
        raise ValueError("evolution time must be >= 0")
    targets = sorted(times) if times is not None else [t]
    if targets and (targets[0] < 0 or targets[-1] > t + 1e-12 * max(t, 1.0)):
        raise ValueError("requested times must lie in [0, t]")
    v = rho0.matrix.ravel().astype(complex)
    now = 0.0
    step = t if t > 0 else 1.0
    ceiling = math.inf  # smallest step known to leave the Krylov space unconverged
    gamma_cap = math.inf  # smallest pole known to stall the inner solver
    out = []
    solvers = {}
    precond = _krylov.SylvesterPreconditioner(L.heff) if L.has_parts and L.dim >= 8 else None
    tr_row = _trace_row(L.dim)
    trace = (lambda x: tr_row @ x) if L.trace_defect() < 1e-10 * max(L.max_entry(), 1) else None
    for target in targets:
        while target - now > 1e-14 * max(target, 1.0):
            h = min(step, target - now, 0.5 * gamma_cap / shift_fraction)
            gamma = shift_fraction * h
            key = round(gamma, 12)
            if key not in solvers:
                solvers = {key: _shifted_solver(L, gamma, precond)}
            try:
                y, ok, m = _krylov.shift_invert_expm(solvers[key], v, h, gamma, m_max, tol,
                                                     trace=trace)
            except _InnerSolveFailed:
                gamma_cap = gamma
                log.debug("inner solve stalled at pole %.3e; lowering the cap", gamma)
                if gamma < 1e-12 * max(t, 1.0):
                    raise StiffnessError(f"inner solver stalls at t={now:.6g}") from None
                continue
            if ok:
                v, now = y, now + h
                if 2 * h < ceiling:
                    step = 2 * h
            else:
                ceiling = min(ceiling, h)
                step = h / 2
                log.debug("Krylov exponential unconverged at h=%.3e (m=%d); halving", h, m)
                if step < 1e-12 * max(t, 1.0):
                    raise StiffnessError(f"step size underflow at t={now:.6g}")
        rho = v.reshape(L.dim, L.dim)
        out.append(DensityMatrix(0.5 * (rho + rho.conj().T), rho0.dims))
    return out if times is not None else out[0]


# ----------------------------------------------------------------- truncation


def solve_point(p: SystemParams, d: SpaceDims, form: str = "standard", x0=None) -> DensityMatrix:
    """Steady state of the full master equation at parameters ``p``."""
    return steady_state(liouvillian_for(p, d, form), d, x0=x0)


def _g2(p, d, form):
    from .observables import g2_zero

    return g2_zero(solve_point(p, d, form), d)


def converge_truncation(p: SystemParams, d0: SpaceDims = SpaceDims(), *, rel_tol=0.01,
                        form: str = "standard", n_cav_step=2, n_mech_step=4,
                        n_cav_cap=N_CAV_CAP, n_mech_cap=N_MECH_CAP) -> SpaceDims:
    """Grow the truncation until g2(0) at ``p`` is stable to ``rel_tol``.

    The cavity and phonon cutoffs are escalated separately; a cutoff is kept
    once one more step changes g2(0) by less than ``rel_tol`` (relative).
    Raises TruncationDivergenceError if a cap is reached while g2(0) is
    still moving.
    """
    cache = {}

    def g2_at(dims):
        if dims not in cache:
            cache[dims] = _g2(p, dims, form)
        return cache[dims]

    d = d0
    value = g2_at(d)
    while True:
        changed = False
        for factor, step, cap in (("n_cav", n_cav_step, n_cav_cap),
                                  ("n_mech", n_mech_step, n_mech_cap)):
            current = getattr(d, factor)
            if current >= cap:
                continue
            trial = SpaceDims(**{**d.__dict__, factor: min(current + step, cap)})
            trial_value = g2_at(trial)
            rel = abs(trial_value - value) / max(abs(value), 1e-300)
            log.info("truncation %s -> %s: g2 %.6g -> %.6g (rel %.2e)",
                     d, trial, value, trial_value, rel)
            if rel >= rel_tol:
                d, value, changed = trial, trial_value, True
                if getattr(d, factor) >= cap:
                    raise TruncationDivergenceError(
                        f"g2(0) still changing by {rel:.2%} on reaching the cap {d}"
                    )
        if not changed:
            return d
