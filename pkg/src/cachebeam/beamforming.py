"""Cooperative-beamforming SDP: relaxed power minimization, rank-1 recovery,
and KKT optimality certificates.

The per-request lifted matrices W are complex Hermitian. Solvers are driven
through the standard real embedding  A -> [[Re A, -Im A], [Im A, Re A]]
(real-embedded PSD equals Hermitian PSD; traces double, compensated in the
objective), which keeps dual extraction exact for backends without a
Hermitian cone.

Channels are normalized by the noise standard deviation when the problem is
built, so the QoS constraint reads tr(W H)/kappa >= 1 + interference and the
secrecy constraint reads G^H W G <= kappa_tol * I. All certificate identities
below are stated in these normalized units.

Two solve paths exist:

* full: one PSD block of side M*Nt per request, every constraint explicit,
  duals recovered for the KKT certificate.
* reduced: each W is restricted to the span of the (masked) user channels and
  eavesdropper columns. Restriction is lossless whenever per-BS power caps
  exceed the optimum (projecting any feasible W onto the span preserves the
  QoS/secrecy values and cannot push a per-BS block above the total trace),
  which is verified at runtime: the reduced result is accepted only when its
  objective is below ``reduced_safety * min(P_max)``; otherwise the full
  problem is solved.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from cachebeam.model import Scenario

NO_SECRECY = math.inf  # kappa_tol sentinel: disables the eavesdropper constraint

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_SOLVER_FAILURE = "solver-failure"


class InvalidProblemError(ValueError):
    """Problem data dimensions or values are inconsistent."""


class CertificateError(RuntimeError):
    """A solution failed rank-1 recovery or a KKT residual check."""


@dataclass(frozen=True)
class SolverOptions:
    solver: str = "clarabel"
    reduced: str = "auto"            # "auto" | "always" | "never"
    reduced_safety: float = 0.99     # certify reduced solves below this fraction of min P_max
    reduced_fallback: str = "full"   # "full": re-solve uncertified cases exactly;
                                     # "accept": return them flagged certified=False
    scs_retry: bool = True           # retry breakdowns on the first-order backend
    gap_tol: float = 1e-10           # interior-point duality gap (abs and rel)
    feas_tol: float = 1e-9
    scs_eps: float = 1e-9
    max_iter: int = 100_000          # first-order backend iteration cap


DEFAULT_OPTIONS = SolverOptions()


def embed_hermitian(a: np.ndarray) -> np.ndarray:
    """Real 2x2-block embedding of a Hermitian (or complex square) matrix."""
    return np.block([[a.real, -a.imag], [a.imag, a.real]])


def embed_rect(g: np.ndarray) -> np.ndarray:
    """Real embedding of a complex rectangular matrix."""
    return np.block([[g.real, -g.imag], [g.imag, g.real]])


def complexify(x: np.ndarray) -> np.ndarray:
    """Inverse of the embedding: averaged Hermitian part of a real 2n x 2n matrix."""
    n = x.shape[0] // 2
    re = 0.5 * (x[:n, :n] + x[n:, n:])
    im = 0.5 * (x[n:, :n] - x[:n, n:])
    her = re + 1j * im
    return 0.5 * (her + her.conj().T)


@dataclass(frozen=True)
class BeamformingProblem:
    """Relaxed delivery problem for one scenario under a fixed cooperation plan."""

    scenario: Scenario
    files: tuple[int, ...]            # requested files, ascending; rows of q
    q: np.ndarray                     # (F(S), M) binary cooperation indicators
    h_norm: np.ndarray                # (M*Nt, S) channels / noise std
    g_norm: np.ndarray                # (M*Nt, Ne) ER channel / ER noise std
    kappa_req: np.ndarray             # (S,) QoS SINR thresholds
    kappa_tol: np.ndarray             # (S,) secrecy thresholds (inf disables)
    p_max: np.ndarray                 # (M,) per-BS power caps, watts

    def __post_init__(self):
        cfg = self.scenario.config
        n = cfg.num_bs * cfg.tx_antennas
        s = len(self.scenario.requests)
        if self.q.shape != (len(self.files), cfg.num_bs):
            raise InvalidProblemError(
                f"cooperation must be ({len(self.files)}, {cfg.num_bs}), got {self.q.shape}")
        if not np.all((self.q == 0) | (self.q == 1)):
            raise InvalidProblemError("cooperation matrix must be binary")
        if self.h_norm.shape != (n, s) or self.g_norm.shape[0] != n:
            raise InvalidProblemError("channel dimensions do not match the scenario")
        if self.kappa_req.shape != (s,) or self.kappa_tol.shape != (s,):
            raise InvalidProblemError("one threshold per request is required")
        for arr in (self.q, self.h_norm, self.g_norm, self.kappa_req,
                    self.kappa_tol, self.p_max):
            arr.setflags(write=False)

    @property
    def num_requests(self) -> int:
        return len(self.scenario.requests)

    @property
    def dim(self) -> int:
        return self.h_norm.shape[0]

    def file_row(self, req_idx: int) -> int:
        return self.files.index(self.scenario.requests[req_idx].file)

    def selector(self, bs: int) -> np.ndarray:
        """Diagonal 0/1 selector for BS `bs` (the block of Nt antennas)."""
        cfg = self.scenario.config
        d = np.zeros(self.dim)
        d[bs * cfg.tx_antennas:(bs + 1) * cfg.tx_antennas] = 1.0
        return np.diag(d)

    def channel_outer(self, req_idx: int) -> np.ndarray:
        h = self.h_norm[:, req_idx]
        return np.outer(h, h.conj())

    def active_antennas(self, req_idx: int) -> np.ndarray:
        """Antenna indices of BSs cooperating for this request's file."""
        cfg = self.scenario.config
        row = self.q[self.file_row(req_idx)]
        return np.concatenate(
            [np.arange(m * cfg.tx_antennas, (m + 1) * cfg.tx_antennas)
             for m in range(cfg.num_bs) if row[m] == 1]
        ) if row.any() else np.array([], dtype=int)


@dataclass
class DualSet:
    """Lagrange multipliers of the full-space solve, in complex-domain scaling."""

    alpha: np.ndarray                  # (S, M) power-cap coupling duals
    beta: np.ndarray                   # (M,) per-BS power duals
    lam: np.ndarray                    # (S,) QoS duals
    phi: list[np.ndarray | None]       # per-request secrecy duals, Ne x Ne Hermitian
    theta: list[np.ndarray]            # per-request PSD-cone duals, n x n Hermitian


@dataclass
class BeamformingSolution:
    status: str
    objective: float | None
    W: list[np.ndarray] | None = None
    w: list[np.ndarray] | None = None
    residuals: dict = field(default_factory=dict)
    duals: DualSet | None = None
    reduced: bool = False
    certified: bool = True   # False: subspace bound only; true optimum provably
                             # lies above the certificate threshold
    detail: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL


def build_r1(scenario: Scenario, cooperation: np.ndarray,
             kappa_req: float | np.ndarray | None = None,
             kappa_tol: float | np.ndarray | None = None,
             p_max: float | np.ndarray | None = None) -> BeamformingProblem:
    """Assemble the relaxed problem for a scenario and a binary cooperation plan.

    Thresholds default to the scenario config's rate requirements converted to
    SINR form; `kappa_tol=NO_SECRECY` disables the eavesdropper constraint.
    """
    cfg = scenario.config
    files = scenario.requested_files
    s = len(scenario.requests)
    q = np.asarray(cooperation, dtype=float)
    if q.ndim != 2:
        raise InvalidProblemError("cooperation must be a 2-d matrix")
    kr = np.broadcast_to(np.asarray(
        cfg.sinr_threshold_qos if kappa_req is None else kappa_req, dtype=float), (s,)).copy()
    kt = np.broadcast_to(np.asarray(
        cfg.sinr_threshold_secrecy if kappa_tol is None else kappa_tol, dtype=float), (s,)).copy()
    pm = np.broadcast_to(np.asarray(
        cfg.max_tx_power_w if p_max is None else p_max, dtype=float), (cfg.num_bs,)).copy()
    return BeamformingProblem(
        scenario=scenario,
        files=files,
        q=q,
        h_norm=scenario.channels_lr / math.sqrt(scenario.noise_lr_w),
        g_norm=scenario.channel_er / math.sqrt(scenario.noise_er_w),
        kappa_req=kr,
        kappa_tol=kt,
        p_max=pm,
    )


def orthonormal_basis(columns: list[np.ndarray], tol: float = 1e-10) -> np.ndarray:
    a = np.array(columns).T
    u, sv, _ = np.linalg.svd(a, full_matrices=False)
    keep = sv > tol * sv[0]
    return u[:, keep]


def _principal_component(w_mat: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Principal rank-1 factor: returns (w, lambda2/lambda1, frobenius residual)."""
    vals, vecs = np.linalg.eigh(w_mat)
    lead = max(vals[-1], 0.0)
    w = math.sqrt(lead) * vecs[:, -1]
    k = int(np.argmax(np.abs(w))) if w.size else 0
    if w.size and abs(w[k]) > 0:
        w = w * (w[k].conjugate() / abs(w[k]))
    ratio = abs(vals[-2] / vals[-1]) if vals.size > 1 and vals[-1] > 0 else 0.0
    tr = np.sum(np.abs(vals))
    resid = np.linalg.norm(w_mat - np.outer(w, w.conj())) / tr if tr > 0 else 0.0
    return w, ratio, resid


def extract_rank1(solution: BeamformingSolution,
                  ratio_limit: float = 1e-4) -> list[np.ndarray]:
    """Recover beamforming vectors from the lifted optimum (principal eigenvectors).

    The phase is normalized so each vector's largest-magnitude entry is real
    non-negative. Raises CertificateError when any W is materially non-rank-1,
    which would contradict the tightness guarantee.
    """
    if not solution.optimal or solution.W is None:
        raise CertificateError("rank-1 extraction requires an optimal solution")
    out, ratios, resids = [], [], []
    for w_mat in solution.W:
        w, ratio, resid = _principal_component(w_mat)
        if ratio > ratio_limit:
            raise CertificateError(
                f"lifted matrix is not rank-1: lambda2/lambda1 = {ratio:.3e}")
        out.append(w)
        ratios.append(ratio)
        resids.append(resid)
    solution.w = out
    solution.residuals["rank1_ratio"] = max(ratios) if ratios else 0.0
    solution.residuals["rank1_frob"] = max(resids) if resids else 0.0
    return out


def _status_from_cvxpy(status: str) -> str:
    if status in (cp.OPTIMAL,):
        return STATUS_OPTIMAL
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return STATUS_INFEASIBLE
    return STATUS_SOLVER_FAILURE


def _solve_cvxpy(prob: cp.Problem, options: SolverOptions) -> str:
    if options.solver == "scs":
        attempts = [{"solver": cp.SCS, "eps": options.scs_eps,
                     "max_iters": options.max_iter}]
    else:
        attempts = [{"solver": cp.CLARABEL, "tol_gap_abs": options.gap_tol,
                     "tol_gap_rel": options.gap_tol, "tol_feas": options.feas_tol}]
        if options.scs_retry:
            # bounded-effort retry on a different algorithm catches IPM breakdowns
            attempts.append({"solver": cp.SCS, "eps": max(options.scs_eps, 1e-7),
                             "max_iters": min(options.max_iter, 20_000)})
    status = "unattempted"
    for kwargs in attempts:
        try:
            with warnings.catch_warnings():
                # inaccurate-solution warnings are handled by explicit
                # residual checks and the fallback chain
                warnings.simplefilter("ignore", UserWarning)
                prob.solve(**kwargs)
        except (cp.SolverError, ValueError, ArithmeticError) as exc:
            status = f"exception: {exc}"
            continue
        status = prob.status
        if _status_from_cvxpy(status) != STATUS_SOLVER_FAILURE:
            return status
    return status


def _empty_active_infeasible(problem: BeamformingProblem) -> bool:
    for i in range(problem.num_requests):
        if problem.kappa_req[i] > 0 and problem.active_antennas(i).size == 0:
            return True
    return False


def power_lower_bound(problem: BeamformingProblem) -> float:
    """Provable lower bound on the total power: sum of interference-free MRT
    powers over each request's active antennas (Cauchy-Schwarz on C6)."""
    total = 0.0
    for i in range(problem.num_requests):
        if problem.kappa_req[i] <= 0:
            continue
        sel = problem.active_antennas(i)
        h = problem.h_norm[sel, i]
        gain = float(np.vdot(h, h).real)
        if gain <= 0:
            return math.inf
        total += problem.kappa_req[i] / gain
    return total


def _power_scale(problem: BeamformingProblem) -> float:
    """Natural power unit: geometric mean of the per-request MRT powers over
    each request's active antennas (a per-request lower bound on its power).

    Solving in these units keeps the lifted matrices O(1), so the solver's
    absolute gap tolerance translates into comparably small rank-1 ratios,
    including for plans whose optimum sits far above the full-array MRT.
    """
    logs = []
    for i in range(problem.num_requests):
        if problem.kappa_req[i] <= 0:
            continue
        sel = problem.active_antennas(i)
        h = problem.h_norm[sel, i] if sel.size else problem.h_norm[:, i]
        gain = float(np.vdot(h, h).real)
        if gain > 0:
            logs.append(math.log(problem.kappa_req[i] / gain))
    return math.exp(np.mean(logs)) if logs else 1.0


def solve_r1(problem: BeamformingProblem, *, need_duals: bool = False,
             options: SolverOptions = DEFAULT_OPTIONS) -> BeamformingSolution:
    """Solve the relaxed delivery problem.

    Returns status "optimal" with lifted matrices, recovered vectors, and (on
    the full path) duals; "infeasible" when the constraint set is empty; or
    "solver-failure" on numerical breakdown. Never returns a violating point:
    constraint residuals are recomputed from the returned matrices.

    With ``options.reduced_fallback == "accept"``, an uncertified subspace
    result may come back flagged ``certified=False``; its objective (or
    infeasibility) then only proves that the true optimum lies above
    ``reduced_safety * min(P_max)``. The default re-solves such cases in the
    full space.
    """
    s = problem.num_requests
    if s == 0:
        return BeamformingSolution(status=STATUS_OPTIMAL, objective=0.0, W=[], w=[])
    if _empty_active_infeasible(problem):
        return BeamformingSolution(
            status=STATUS_INFEASIBLE, objective=None,
            detail="a request with a positive SINR requirement has no cooperating BS")
    if power_lower_bound(problem) > float(np.sum(problem.p_max)):
        return BeamformingSolution(
            status=STATUS_INFEASIBLE, objective=None,
            detail="interference-free power lower bound exceeds the aggregate caps")

    use_reduced = (not need_duals and options.reduced != "never")
    if options.reduced == "auto":
        ranks = s + problem.g_norm.shape[1]
        use_reduced = use_reduced and ranks < problem.dim
    if use_reduced:
        sol = _solve_reduced(problem, options)
        if sol is not None:
            return sol
    return _solve_full(problem, options, need_duals)


def _recovered_solution(problem: BeamformingProblem, status: str, objective: float,
                        w_mats: list[np.ndarray], *, reduced: bool,
                        duals: DualSet | None = None, detail: str = "") -> BeamformingSolution:
    sol = BeamformingSolution(status=status, objective=objective, W=w_mats,
                              duals=duals, reduced=reduced, detail=detail)
    sol.residuals.update(_constraint_residuals(problem, w_mats))
    ws = []
    for w_mat in w_mats:
        w, _, _ = _principal_component(w_mat)
        ws.append(w)
    sol.w = ws
    return sol


def _constraint_residuals(problem: BeamformingProblem, w_mats: list[np.ndarray]) -> dict:
    """Max violation per constraint family, recomputed from the returned matrices."""
    cfg = problem.scenario.config
    s = problem.num_requests
    nt = cfg.tx_antennas
    c4 = c5 = c6 = c7 = psd = 0.0
    per_bs = np.zeros(cfg.num_bs)
    for m in range(cfg.num_bs):
        for i in range(s):
            blk = np.trace(w_mats[i][m * nt:(m + 1) * nt, m * nt:(m + 1) * nt]).real
            per_bs[m] += blk
            cap = problem.q[problem.file_row(i), m] * problem.p_max[m]
            c4 = max(c4, (blk - cap) / max(problem.p_max[m], 1e-300))
        c5 = max(c5, (per_bs[m] - problem.p_max[m]) / max(problem.p_max[m], 1e-300))
    for i in range(s):
        if problem.kappa_req[i] > 0:
            h_i = problem.channel_outer(i)
            own = float(np.tensordot(w_mats[i].conj(), h_i).real)
            intf = sum(float(np.tensordot(w_mats[j].conj(), h_i).real)
                       for j in range(s) if j != i)
            c6 = max(c6, (1.0 + intf - own / problem.kappa_req[i]) / (1.0 + intf))
        if math.isfinite(problem.kappa_tol[i]):
            gw = problem.g_norm.conj().T @ w_mats[i] @ problem.g_norm
            lmax = float(np.linalg.eigvalsh(0.5 * (gw + gw.conj().T))[-1])
            c7 = max(c7, (lmax - problem.kappa_tol[i]) / max(problem.kappa_tol[i], 1e-300))
        tr = max(np.trace(w_mats[i]).real, 1e-300)
        psd = max(psd, -float(np.linalg.eigvalsh(w_mats[i])[0]) / tr)
    return {"c4": c4, "c5": c5, "c6": c6, "c7": c7, "psd": psd}


def _solve_reduced(problem: BeamformingProblem, options: SolverOptions,
                   scale_override: float | None = None) -> BeamformingSolution | None:
    """Subspace-restricted solve; returns None when the optimality certificate fails."""
    cfg = problem.scenario.config
    s = problem.num_requests
    n = problem.dim
    ne = problem.g_norm.shape[1]
    scale = scale_override if scale_override is not None else _power_scale(problem)
    root = math.sqrt(scale)
    bases, sels = [], []
    for i in range(s):
        sel = problem.active_antennas(i)
        if sel.size == 0:
            bases.append(None)
            sels.append(sel)
            continue
        cols = [problem.h_norm[sel, j] for j in range(s)]
        cols += [problem.g_norm[sel, j] for j in range(ne)]
        bases.append(orthonormal_basis(cols))
        sels.append(sel)

    xs, cons = [], []
    for i in range(s):
        if bases[i] is None:
            xs.append(None)
            continue
        r = bases[i].shape[1]
        xs.append(cp.Variable((2 * r, 2 * r), PSD=True))
    # per-BS power caps (C4 rows with q=1 are dominated by C5 and omitted;
    # q=0 blocks are removed structurally by the antenna mask)
    nt = cfg.tx_antennas
    for m in range(cfg.num_bs):
        terms = []
        for i in range(s):
            if xs[i] is None:
                continue
            mask = (sels[i] >= m * nt) & (sels[i] < (m + 1) * nt)
            if not mask.any():
                continue
            qm = bases[i][mask, :]
            terms.append(0.5 * cp.sum(cp.multiply(xs[i], embed_hermitian(qm.conj().T @ qm))))
        if terms:
            cons.append(sum(terms) <= problem.p_max[m] / scale)
    for i in range(s):
        if problem.kappa_req[i] > 0:
            hk = root * (bases[i].conj().T @ problem.h_norm[sels[i], i])
            own = 0.5 * cp.sum(cp.multiply(xs[i], embed_hermitian(np.outer(hk, hk.conj()))))
            intf = 0
            for j in range(s):
                if j == i or xs[j] is None:
                    continue
                hj = root * (bases[j].conj().T @ problem.h_norm[sels[j], i])
                intf = intf + 0.5 * cp.sum(cp.multiply(xs[j], embed_hermitian(np.outer(hj, hj.conj()))))
            cons.append(own / problem.kappa_req[i] - intf >= 1.0)
        if xs[i] is not None and math.isfinite(problem.kappa_tol[i]):
            gk = embed_rect(root * (bases[i].conj().T @ problem.g_norm[sels[i], :]))
            cons.append(problem.kappa_tol[i] * np.eye(2 * ne) - gk.T @ xs[i] @ gk >> 0)
    if all(x is None for x in xs):
        zeros = [np.zeros((n, n), dtype=complex) for _ in range(s)]
        return _recovered_solution(problem, STATUS_OPTIMAL, 0.0, zeros, reduced=True)
    objective = 0.5 * sum(cp.trace(x) for x in xs if x is not None)
    prob = cp.Problem(cp.Minimize(objective), cons)
    raw = _solve_cvxpy(prob, options)
    status = _status_from_cvxpy(raw)
    accept = options.reduced_fallback == "accept"
    threshold = options.reduced_safety * float(np.min(problem.p_max))
    if status == STATUS_INFEASIBLE and accept:
        # restricted infeasibility certifies that any full-space solution
        # would need more than the threshold power
        return BeamformingSolution(
            status=STATUS_INFEASIBLE, objective=None, certified=False, reduced=True,
            detail="infeasible within the channel subspace")
    if status == STATUS_SOLVER_FAILURE and scale_override is None:
        # breakdowns usually mean the optimum sits far above the a-priori
        # power unit; rescale by the observed objective and retry once
        try:
            approx = float(prob.value)
        except (TypeError, ValueError):
            approx = math.nan
        if math.isfinite(approx) and approx > 0:
            return _solve_reduced(problem, options, scale_override=scale * approx)
    if status != STATUS_OPTIMAL:
        if accept:
            # bounded-effort mode: report the breakdown instead of paying
            # for a full-space solve
            return BeamformingSolution(
                status=STATUS_SOLVER_FAILURE, objective=None, certified=False,
                reduced=True, detail=f"subspace solve did not converge: {raw}")
        return None  # fall back to the authoritative full-space solve
    obj = scale * float(prob.value)
    if obj > threshold and not accept:
        return None  # certificate fails: caps may bind, subspace restriction unsafe
    w_mats = []
    for i in range(s):
        w_full = np.zeros((n, n), dtype=complex)
        if xs[i] is not None:
            y = scale * complexify(np.asarray(xs[i].value))
            wm = bases[i] @ y @ bases[i].conj().T
            w_full[np.ix_(sels[i], sels[i])] = 0.5 * (wm + wm.conj().T)
        w_mats.append(w_full)
    sol = _recovered_solution(problem, STATUS_OPTIMAL, obj, w_mats, reduced=True)
    sol.certified = obj <= threshold
    return sol


def _solve_full(problem: BeamformingProblem, options: SolverOptions,
                need_duals: bool) -> BeamformingSolution:
    cfg = problem.scenario.config
    s = problem.num_requests
    n = problem.dim
    nt = cfg.tx_antennas
    ne = problem.g_norm.shape[1]
    # solve in units of the natural power scale; duals are mapped back below
    scale = _power_scale(problem)
    root = math.sqrt(scale)
    g_r = embed_rect(root * problem.g_norm)

    xs = [cp.Variable((2 * n, 2 * n), symmetric=True) for _ in range(s)]
    c4, c5, c6, c7, c8 = {}, {}, {}, {}, {}

    def block_power(i, m):
        a0, a1 = m * nt, (m + 1) * nt
        b0, b1 = n + m * nt, n + (m + 1) * nt
        return 0.5 * (cp.trace(xs[i][a0:a1, a0:a1]) + cp.trace(xs[i][b0:b1, b0:b1]))

    cons = []
    for m in range(cfg.num_bs):
        for i in range(s):
            cap = problem.q[problem.file_row(i), m] * problem.p_max[m] / scale
            c4[(i, m)] = block_power(i, m) <= cap
            cons.append(c4[(i, m)])
        c5[m] = sum(block_power(i, m) for i in range(s)) <= problem.p_max[m] / scale
        cons.append(c5[m])
    h_embed = [embed_hermitian(scale * problem.channel_outer(i)) for i in range(s)]
    for i in range(s):
        if problem.kappa_req[i] > 0:
            own = 0.5 * cp.sum(cp.multiply(xs[i], h_embed[i]))
            intf = sum(0.5 * cp.sum(cp.multiply(xs[j], h_embed[i]))
                       for j in range(s) if j != i)
            c6[i] = own / problem.kappa_req[i] - intf >= 1.0
            cons.append(c6[i])
        if math.isfinite(problem.kappa_tol[i]):
            c7[i] = problem.kappa_tol[i] * np.eye(2 * ne) - g_r.T @ xs[i] @ g_r >> 0
            cons.append(c7[i])
        c8[i] = xs[i] >> 0
        cons.append(c8[i])
    prob = cp.Problem(cp.Minimize(0.5 * sum(cp.trace(x) for x in xs)), cons)
    raw = _solve_cvxpy(prob, options)
    status = _status_from_cvxpy(raw)
    if (status == STATUS_SOLVER_FAILURE and raw == cp.OPTIMAL_INACCURATE
            and all(x.value is not None for x in xs)):
        # accept only if the returned point actually satisfies the constraints
        w_try = [scale * complexify(np.asarray(x.value)) for x in xs]
        resid = _constraint_residuals(problem, w_try)
        if max(resid.values()) <= 1e-6:
            status = STATUS_OPTIMAL
    if status != STATUS_OPTIMAL:
        detail = raw if isinstance(raw, str) else ""
        return BeamformingSolution(status=status, objective=None, detail=str(detail))
    obj = scale * float(prob.value)
    if obj > float(np.sum(problem.p_max)) + 1.0:
        return BeamformingSolution(
            status=STATUS_INFEASIBLE, objective=None,
            detail="objective exceeds the aggregate power budget; treating as infeasible")
    w_mats = [scale * complexify(np.asarray(x.value)) for x in xs]
    duals = None
    if need_duals:
        alpha = np.zeros((s, cfg.num_bs))
        beta = np.zeros(cfg.num_bs)
        lam = np.zeros(s)
        for (i, m), con in c4.items():
            alpha[i, m] = max(float(con.dual_value), 0.0)
        for m, con in c5.items():
            beta[m] = max(float(con.dual_value), 0.0)
        for i, con in c6.items():
            # the scaled problem sees H*scale, so its QoS dual shrinks by scale
            lam[i] = max(float(con.dual_value), 0.0) * scale
        phi = [2.0 * scale * complexify(np.asarray(c7[i].dual_value)) if i in c7 else None
               for i in range(s)]
        theta = [2.0 * complexify(np.asarray(c8[i].dual_value)) for i in range(s)]
        duals = DualSet(alpha=alpha, beta=beta, lam=lam, phi=phi, theta=theta)
    return _recovered_solution(problem, STATUS_OPTIMAL, obj, w_mats,
                               reduced=False, duals=duals)


# --- diagnostics ----------------------------------------------------------


@dataclass
class SolutionReport:
    sinr: np.ndarray                 # per request
    rate_spectral: np.ndarray        # log2(1 + SINR), bits/s/Hz
    er_rate_spectral: np.ndarray     # exact log-det eavesdropper capacity
    per_bs_power_w: np.ndarray
    violations: dict

    @property
    def max_violation(self) -> float:
        return max(self.violations.values())


def verify_solution(scenario: Scenario, cooperation: np.ndarray,
                    w_vectors: list[np.ndarray],
                    kappa_req: float | np.ndarray | None = None,
                    kappa_tol: float | np.ndarray | None = None) -> SolutionReport:
    """Recompute rates and constraint slacks from recovered beamformers.

    Pure diagnostic over the physical (unnormalized) channels: the SINR uses
    the actual noise powers and the eavesdropper rate is the exact log-det
    capacity, not the trace surrogate.
    """
    cfg = scenario.config
    problem = build_r1(scenario, cooperation, kappa_req, kappa_tol)
    s = len(scenario.requests)
    nt = cfg.tx_antennas
    sig = scenario.noise_lr_w
    sinr = np.zeros(s)
    er_rate = np.zeros(s)
    for i in range(s):
        h_i = scenario.channels_lr[:, i]
        own = abs(np.vdot(h_i, w_vectors[i])) ** 2
        intf = sum(abs(np.vdot(h_i, w_vectors[j])) ** 2 for j in range(s) if j != i)
        sinr[i] = own / (sig + intf)
        gw = scenario.channel_er.conj().T @ w_vectors[i]
        a = np.outer(gw, gw.conj()) / scenario.noise_er_w
        er_rate[i] = float(np.linalg.slogdet(np.eye(cfg.er_antennas) + a)[1] / math.log(2.0))
    per_bs = np.zeros(cfg.num_bs)
    for m in range(cfg.num_bs):
        for i in range(s):
            per_bs[m] += float(np.sum(np.abs(w_vectors[i][m * nt:(m + 1) * nt]) ** 2))
    c4 = c5 = c6 = c7 = 0.0
    for m in range(cfg.num_bs):
        for i in range(s):
            blk = float(np.sum(np.abs(w_vectors[i][m * nt:(m + 1) * nt]) ** 2))
            cap = problem.q[problem.file_row(i), m] * problem.p_max[m]
            c4 = max(c4, (blk - cap) / problem.p_max[m])
        c5 = max(c5, (per_bs[m] - problem.p_max[m]) / problem.p_max[m])
    for i in range(s):
        if problem.kappa_req[i] > 0:
            c6 = max(c6, (problem.kappa_req[i] - sinr[i]) / problem.kappa_req[i])
        if math.isfinite(problem.kappa_tol[i]):
            tol_rate = math.log2(1.0 + problem.kappa_tol[i])
            c7 = max(c7, (er_rate[i] - tol_rate) / tol_rate if tol_rate > 0 else er_rate[i])
    return SolutionReport(
        sinr=sinr,
        rate_spectral=np.log2(1.0 + sinr),
        er_rate_spectral=er_rate,
        per_bs_power_w=per_bs,
        violations={"c4": c4, "c5": c5, "c6": c6, "c7": c7},
    )


@dataclass
class KKTCertificate:
    """Optimality certificate assembled from the full-space duals.

    With noise-normalized channels the stationarity identity per request is
    B - (lam/kappa_req) H - Theta = 0 with
    B = I + sum_m (alpha_m + beta_m) Lambda_m + G Phi G^H
      + sum_{other requests} lam' H'.
    B collects the identity plus PSD dual terms, so B > 0; combined with the
    complementary slackness W Theta = 0 this pins rank(W) = rank(W B)
    <= rank(H) <= 1.
    """

    stationarity: np.ndarray          # per-request Frobenius residuals
    compl_slack_psd: np.ndarray       # per-request ||W Theta||_F
    compl_slack_scalar: float         # max |dual * slack| over scalar constraints
    dual_feasibility: float           # most negative dual value / eigenvalue
    b_min_eig: np.ndarray             # per-request smallest eigenvalue of B
    b_norm: np.ndarray                # per-request ||B||_2
    rank_chain_ok: bool
    duals: DualSet

    def ok(self, tol: float = 1e-6) -> bool:
        scale = 1.0 + self.b_norm
        return (bool(np.all(self.stationarity <= tol * scale))
                and bool(np.all(self.compl_slack_psd <= tol * scale))
                and self.compl_slack_scalar <= tol * float(np.max(scale))
                and self.dual_feasibility >= -tol
                and bool(np.all(self.b_min_eig > 0.0))
                and self.rank_chain_ok)


def verify_kkt(problem: BeamformingProblem, solution: BeamformingSolution,
               duals: DualSet | None = None) -> KKTCertificate:
    """Check stationarity, complementary slackness, dual feasibility, and B > 0."""
    duals = duals if duals is not None else solution.duals
    if duals is None:
        raise CertificateError("KKT verification requires duals from a full-space solve")
    if not solution.optimal or solution.W is None:
        raise CertificateError("KKT verification requires an optimal solution")
    cfg = problem.scenario.config
    s = problem.num_requests
    n = problem.dim
    stat = np.zeros(s)
    cs_psd = np.zeros(s)
    b_min = np.zeros(s)
    b_norm = np.zeros(s)
    lambdas = [problem.selector(m) for m in range(cfg.num_bs)]
    h_outer = [problem.channel_outer(i) for i in range(s)]
    dual_min = min(
        float(np.min(duals.alpha)) if duals.alpha.size else 0.0,
        float(np.min(duals.beta)) if duals.beta.size else 0.0,
        float(np.min(duals.lam)) if duals.lam.size else 0.0,
    )
    cs_scalar = 0.0
    nt = cfg.tx_antennas
    for i in range(s):
        b = np.eye(n, dtype=complex)
        for m in range(cfg.num_bs):
            b += (duals.alpha[i, m] + duals.beta[m]) * lambdas[m]
        if duals.phi[i] is not None:
            phi = duals.phi[i]
            dual_min = min(dual_min, float(np.linalg.eigvalsh(phi)[0]))
            b += problem.g_norm @ phi @ problem.g_norm.conj().T
        for j in range(s):
            if j != i:
                b += duals.lam[j] * h_outer[j]
        own = (duals.lam[i] / problem.kappa_req[i]) * h_outer[i] \
            if problem.kappa_req[i] > 0 else np.zeros((n, n))
        theta = duals.theta[i]
        dual_min = min(dual_min, float(np.linalg.eigvalsh(theta)[0]))
        stat[i] = float(np.linalg.norm(b - own - theta))
        cs_psd[i] = float(np.linalg.norm(solution.W[i] @ theta))
        eigs = np.linalg.eigvalsh(0.5 * (b + b.conj().T))
        b_min[i] = float(eigs[0])
        b_norm[i] = float(eigs[-1])
        # scalar complementary slackness
        for m in range(cfg.num_bs):
            blk = float(np.trace(solution.W[i][m * nt:(m + 1) * nt,
                                               m * nt:(m + 1) * nt]).real)
            cap = problem.q[problem.file_row(i), m] * problem.p_max[m]
            cs_scalar = max(cs_scalar, abs(duals.alpha[i, m] * (cap - blk)))
        if problem.kappa_req[i] > 0:
            own_v = float(np.tensordot(solution.W[i].conj(), h_outer[i]).real)
            intf = sum(float(np.tensordot(solution.W[j].conj(), h_outer[i]).real)
                       for j in range(s) if j != i)
            cs_scalar = max(cs_scalar, abs(duals.lam[i] * (own_v / problem.kappa_req[i]
                                                           - 1.0 - intf)))
    for m in range(cfg.num_bs):
        tot = sum(float(np.trace(solution.W[i][m * nt:(m + 1) * nt,
                                               m * nt:(m + 1) * nt]).real)
                  for i in range(s))
        cs_scalar = max(cs_scalar, abs(duals.beta[m] * (problem.p_max[m] - tot)))
    rank_ok = all(_principal_component(w)[1] <= 1e-4 for w in solution.W)
    return KKTCertificate(
        stationarity=stat,
        compl_slack_psd=cs_psd,
        compl_slack_scalar=cs_scalar,
        dual_feasibility=dual_min,
        b_min_eig=b_min,
        b_norm=b_norm,
        rank_chain_ok=rank_ok,
        duals=duals,
    )


def det_trace_bound_check(a: np.ndarray) -> tuple[float, float, float]:
    """Evaluate det(I + A) against 1 + tr(A) for Hermitian PSD A.

    Returns (det side, trace side, gap); the gap is non-negative up to
    rounding, and zero exactly when rank(A) <= 1.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("input must be a square matrix")
    scale = max(float(np.linalg.norm(a)), 1.0)
    if np.linalg.norm(a - a.conj().T) > 1e-9 * scale:
        raise ValueError("input must be Hermitian")
    eigs = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
    if eigs[0] < -1e-9 * scale:
        raise ValueError(f"input must be PSD; smallest eigenvalue {eigs[0]:.3e}")
    det_side = float(np.prod(1.0 + np.maximum(eigs, 0.0)))
    trace_side = 1.0 + float(np.sum(eigs))
    return det_side, trace_side, det_side - trace_side
