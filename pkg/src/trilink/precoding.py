"""Transmit precoders and nominal combiners for all six schemes.

IA and CoMP run the alternating forward/reverse max-SINR iteration: each
stream's combiner is the interference-plus-noise-whitened matched filter
B^-1 H v (normalized), then the network is reversed (channels conjugate
transposed, combiners become precoders) and the step repeats.  IA keeps
each stream's precoder on its own base-station's two antennas; CoMP lets
every precoder span the stacked six-antenna transmitter.  The baselines
use canonical basis-vector precoders and no iteration.

All precoders are represented in the global six-dimensional transmit space
(per-BS precoders are embedded at their antenna offsets) so downstream
physics is scheme-agnostic.  Total radiated power per subcarrier is
p_total, split equally across the scheme's streams.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import ConditioningError, fix_phase

N_SC_DEFAULT = 38
_STREAM_COUNTS = {"ia": 3, "comp": 3, "tdma-simo": 1, "tdma-mimo": 2,
                  "all-simo": 3, "all-mimo": 6}


class Scheme(str, Enum):
    IA = "ia"
    COMP = "comp"
    TDMA_SIMO = "tdma-simo"
    TDMA_MIMO = "tdma-mimo"
    ALL_SIMO = "all-simo"
    ALL_MIMO = "all-mimo"

    @property
    def n_streams(self) -> int:
        return _STREAM_COUNTS[self.value]

    @property
    def is_baseline(self) -> bool:
        return self not in (Scheme.IA, Scheme.COMP)

    def stream_plan(self, active_pair: int = 0):
        """Per-stream (ms, bs, local antenna) ownership.

        bs is None for CoMP (stacked transmitter); local antenna is None for
        the precoded schemes.  active_pair selects the (BS, MS) pair served
        by the TDMA schemes.
        """
        if self is Scheme.IA:
            return [(k, k, None) for k in range(3)]
        if self is Scheme.COMP:
            return [(k, None, None) for k in range(3)]
        a = active_pair % 3
        if self is Scheme.TDMA_SIMO:
            return [(a, a, 0)]
        if self is Scheme.TDMA_MIMO:
            return [(a, a, 0), (a, a, 1)]
        if self is Scheme.ALL_SIMO:
            return [(k, k, 0) for k in range(3)]
        return [(k, k, i) for k in range(3) for i in range(2)]


@dataclass(frozen=True)
class CsiSnapshot:
    """Channel tensor as known at the precoder-computing node."""

    h: np.ndarray
    provenance: str = "true-current"   # or "estimated-previous"

    def __post_init__(self):
        if self.h.ndim != 3 or self.h.shape[1:] != (6, 6):
            raise ValueError("CSI tensor must be (n_sc, 6, 6)")


@dataclass(frozen=True)
class MaxSinrOptions:
    tol: float = 1e-6
    max_iters: int = 500
    init: object = "svd"        # "svd" or an explicit (n_streams, n_sc, dim) array
    keep_best: bool = False     # return the iterate with the best min-stream SINR
    # The alternating iteration has no convergence guarantee and settles into
    # small limit cycles on strongly interference-limited channels; if the
    # precoder change fails to improve by 5% over this many iterations the
    # solve stops and reports non-convergence instead of burning max_iters.
    stall_window: int = 30


@dataclass(frozen=True)
class SchemeSolution:
    """Per-subcarrier solution: unit-norm global precoders, stream powers,
    nominal two-antenna combiners and ownership metadata."""

    scheme: Scheme
    precoders: np.ndarray       # (n_streams, n_sc, 6) unit norm
    powers: np.ndarray          # (n_streams,)
    combiners: np.ndarray       # (n_streams, n_sc, 2) unit norm
    stream_ms: tuple
    stream_bs: tuple            # entries may be None (CoMP)
    converged: np.ndarray | None = None
    iterations: int = 0

    @property
    def n_streams(self) -> int:
        return self.precoders.shape[0]

    @property
    def n_sc(self) -> int:
        return self.precoders.shape[1]

    def scaled_precoders(self) -> np.ndarray:
        """Precoders carrying their power: sqrt(p_j) v_j."""
        return self.precoders * np.sqrt(self.powers)[:, None, None]


def _csi_tensor(csi) -> np.ndarray:
    h = csi.h if isinstance(csi, CsiSnapshot) else np.asarray(csi, dtype=complex)
    if h.ndim != 3 or h.shape[1:] != (6, 6):
        raise ValueError("CSI tensor must be (n_sc, 6, 6)")
    if not np.all(np.isfinite(h)):
        raise ValueError("CSI tensor contains non-finite entries")
    return h


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    # A stream with an identically-zero channel keeps a zero vector.
    safe = np.where(n > 0, n, 1.0)
    return fix_phase(np.where(n > 0, v / safe, 0.0))


def _solve_stack(b: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(b, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise ConditioningError(f"singular covariance in max-SINR step: {exc}") from exc


def _stream_sinr(c: np.ndarray, v: np.ndarray, u: np.ndarray,
                 powers: np.ndarray, noise_var: float) -> np.ndarray:
    """Per-(stream, subcarrier) SINR for unit-norm combiners u."""
    t = np.einsum("kjsrt,jst->kjsr", c, v)
    z = np.abs(np.einsum("ksr,kjsr->kjs", u.conj(), t)) ** 2
    k = np.arange(c.shape[0])
    sig = powers[k][:, None] * z[k, k]
    intf = np.einsum("kjs,j->ks", z, powers) - sig
    return sig / (intf + noise_var)


def _forward_combiners(c, v, powers, noise_var, kk, eye_rx):
    t = np.einsum("kjsrt,jst->kjsr", c, v)
    cov = np.einsum("kjsr,kjsc,j->ksrc", t, t.conj(), powers)
    own = powers[:, None, None, None] * np.einsum(
        "ksr,ksc->ksrc", t[kk, kk], t[kk, kk].conj())
    return _normalize(_solve_stack(cov - own + noise_var * eye_rx, t[kk, kk]))


def _max_sinr_solve(c: np.ndarray, powers: np.ndarray, noise_var: float,
                    opts: MaxSinrOptions, init: np.ndarray) -> tuple:
    """Alternating forward/reverse max-SINR iteration, batched over subcarriers.

    c[k, j] is the (n_sc, 2, txd) channel from stream j's transmit space to
    stream k's receiver.  Subcarriers that converge (or stall in a limit
    cycle) are frozen and dropped from the working set so stragglers don't
    cost full-batch work.  Returns (v, u, converged, iterations).
    """
    n_streams, _, n_sc, _, txd = c.shape
    eye_rx = np.eye(2)
    eye_tx = np.eye(txd)
    kk = np.arange(n_streams)

    v_full = init.copy()
    converged_full = np.zeros(n_sc, dtype=bool)
    best_val_full = np.full(n_sc, -np.inf)
    best_v_full = init.copy()

    active = np.arange(n_sc)
    ca = c
    v = init
    best_delta = np.full(n_sc, np.inf)
    best_delta_iter = np.zeros(n_sc, dtype=np.int64)
    iters = 0

    for iters in range(1, opts.max_iters + 1):
        # Forward: combiner of each stream whitens interference plus noise.
        u = _forward_combiners(ca, v, powers, noise_var, kk, eye_rx)

        if opts.keep_best:
            val = _stream_sinr(ca, v, u, powers, noise_var).min(axis=0)
            better = val > best_val_full[active]
            idx = active[better]
            best_val_full[idx] = val[better]
            best_v_full[:, idx] = v[:, better]

        # Reverse: conjugate-transpose channels, combiners act as precoders.
        rt = np.einsum("jksct,jsc->kjst", ca.conj(), u)
        cov_r = np.einsum("kjst,kjsw,j->kstw", rt, rt.conj(), powers)
        own_r = powers[:, None, None, None] * np.einsum(
            "kst,ksw->kstw", rt[kk, kk], rt[kk, kk].conj())
        br = cov_r - own_r + noise_var * eye_tx
        v_new = _normalize(_solve_stack(br, rt[kk, kk]))

        delta = np.abs(v_new - v).max(axis=(0, 2))
        v = v_new
        v_full[:, active] = v
        converged = delta < opts.tol
        improved = delta < 0.95 * best_delta[active]
        idx = active[improved]
        best_delta[idx] = delta[improved]
        best_delta_iter[idx] = iters
        stalled = iters - best_delta_iter[active] >= opts.stall_window
        done = converged | stalled
        if done.any():
            converged_full[active[converged]] = True
            keep = ~done
            active = active[keep]
            if active.size == 0:
                break
            ca = np.ascontiguousarray(ca[:, :, keep])
            v = np.ascontiguousarray(v[:, keep])

    # Final combiners for the final precoders.
    v = best_v_full if opts.keep_best else v_full
    u = _forward_combiners(c, v, powers, noise_var, kk, eye_rx)

    if opts.keep_best:
        # The very last iterate also competes for best.
        val = _stream_sinr(c, v_full, _forward_combiners(c, v_full, powers,
                                                         noise_var, kk, eye_rx),
                           powers, noise_var).min(axis=0)
        better = val > best_val_full
        v = np.where(better[None, :, None], v_full, v)
        u = _forward_combiners(c, v, powers, noise_var, kk, eye_rx)
    return v, u, converged_full, iters


def _ia_channel_tensor(h: np.ndarray) -> np.ndarray:
    """c[k, j] = 2x2 block from BS j's antennas to MS k's antennas."""
    n_sc = h.shape[0]
    c = np.empty((3, 3, n_sc, 2, 2), dtype=complex)
    for k in range(3):
        for j in range(3):
            c[k, j] = h[:, 2 * k:2 * k + 2, 2 * j:2 * j + 2]
    return c


def _comp_channel_tensor(h: np.ndarray) -> np.ndarray:
    """c[k, j] = full 2x6 channel into MS k (shared stacked transmitter)."""
    n_sc = h.shape[0]
    c = np.empty((3, 3, n_sc, 2, 6), dtype=complex)
    for k in range(3):
        block = h[:, 2 * k:2 * k + 2, :]
        for j in range(3):
            c[k, j] = block
    return c


def _svd_init(direct: np.ndarray) -> np.ndarray:
    """Dominant right singular vector of each stream's direct channel."""
    _, _, vh = np.linalg.svd(direct)
    return fix_phase(vh[..., 0, :].conj())


def embed_ia_precoders(v_local: np.ndarray) -> np.ndarray:
    """Lift per-BS 2-entry IA precoders into the global 6-dim transmit space."""
    n_streams, n_sc, _ = v_local.shape
    out = np.zeros((n_streams, n_sc, 6), dtype=complex)
    for k in range(n_streams):
        out[k, :, 2 * k:2 * k + 2] = v_local[k]
    return out


def max_sinr_ia(csi, noise_var: float, p_total: float,
                opts: MaxSinrOptions | None = None) -> SchemeSolution:
    """Distributed max-SINR interference alignment (3 users, 2x2, 1 stream).

    noise_var is the per-subcarrier noise power used in the whitening term;
    per-stream power is p_total / 3.  Non-convergence is reported via the
    solution's converged flags, not an exception.
    """
    opts = opts or MaxSinrOptions()
    h = _csi_tensor(csi)
    c = _ia_channel_tensor(h)
    powers = np.full(3, p_total / 3.0)

    if isinstance(opts.init, str) and opts.init == "svd":
        direct = np.stack([c[k, k] for k in range(3)])
        init = _svd_init(direct)
    else:
        init = np.asarray(opts.init, dtype=complex)
    v, u, converged, iters = _max_sinr_solve(c, powers, noise_var, opts, init)

    return SchemeSolution(scheme=Scheme.IA, precoders=embed_ia_precoders(v),
                          powers=powers, combiners=u,
                          stream_ms=(0, 1, 2), stream_bs=(0, 1, 2),
                          converged=converged, iterations=iters)


def comp_precode(csi, noise_var: float, p_total: float,
                 opts: MaxSinrOptions | None = None) -> SchemeSolution:
    """Max-SINR on the stacked six-antenna transmitter (3 streams, one per MS).

    Same iteration and termination contract as max_sinr_ia, with every
    precoder living in the full 6-dimensional transmit space.
    """
    opts = opts or MaxSinrOptions()
    h = _csi_tensor(csi)
    c = _comp_channel_tensor(h)
    powers = np.full(3, p_total / 3.0)

    if isinstance(opts.init, str) and opts.init == "svd":
        direct = np.stack([c[k, k] for k in range(3)])
        init = _svd_init(direct)
    else:
        init = np.asarray(opts.init, dtype=complex)
    v, u, converged, iters = _max_sinr_solve(c, powers, noise_var, opts, init)

    return SchemeSolution(scheme=Scheme.COMP, precoders=v, powers=powers,
                          combiners=u, stream_ms=(0, 1, 2),
                          stream_bs=(None, None, None),
                          converged=converged, iterations=iters)


def default_solution(scheme: Scheme, p_total: float, n_sc: int = N_SC_DEFAULT,
                     active_pair: int = 0) -> SchemeSolution:
    """Canonical basis-vector precoders for any scheme.

    This is the baselines' (only) solution and the first-frame default for
    IA/CoMP before any feedback exists.
    """
    plan = scheme.stream_plan(active_pair)
    n_streams = len(plan)
    precoders = np.zeros((n_streams, n_sc, 6), dtype=complex)
    combiners = np.zeros((n_streams, n_sc, 2), dtype=complex)
    for idx, (ms, bs, ant) in enumerate(plan):
        tx = 2 * (bs if bs is not None else idx) + (ant if ant is not None else 0)
        precoders[idx, :, tx] = 1.0
        combiners[idx, :, 0] = 1.0
    powers = np.full(n_streams, p_total / n_streams)
    return SchemeSolution(scheme=scheme, precoders=precoders, powers=powers,
                          combiners=combiners,
                          stream_ms=tuple(p[0] for p in plan),
                          stream_bs=tuple(p[1] for p in plan),
                          converged=None, iterations=0)


def baseline_precode(scheme: Scheme, p_total: float, n_sc: int = N_SC_DEFAULT,
                     active_pair: int = 0) -> SchemeSolution:
    """Canonical solution for the four non-beamforming baseline schemes."""
    if not scheme.is_baseline:
        raise ValueError(f"{scheme.value} is not a baseline scheme")
    return default_solution(scheme, p_total, n_sc, active_pair)


def effective_channels(sol: SchemeSolution, h: np.ndarray) -> np.ndarray:
    """eff[k, j, s] = channel of stream j (with power) into stream k's MS."""
    scaled = sol.scaled_precoders()
    n_streams, n_sc = sol.n_streams, sol.n_sc
    eff = np.empty((n_streams, n_streams, n_sc, 2), dtype=complex)
    for k in range(n_streams):
        rows = h[:, 2 * sol.stream_ms[k]:2 * sol.stream_ms[k] + 2, :]
        eff[k] = np.einsum("srt,jst->jsr", rows, scaled)
    return eff


def sinr_post_of_solution(sol: SchemeSolution, true_csi, sigma2_nominal: float) -> np.ndarray:
    """Subcarrier-aggregated post-combining SINR per stream.

    Per stream: MMSE (max-SINR) combiners are recomputed on the true channel
    with unit norm, then SINR = sum_i S_i / (sum_i I_i + sigma2_nominal)
    where S_i / I_i are the per-subcarrier desired / interfering powers at
    the combiner output and sigma2_nominal is the wideband nominal noise
    power (the per-subcarrier noise variance times the subcarrier count).
    """
    h = true_csi.h if hasattr(true_csi, "h") else np.asarray(true_csi, dtype=complex)
    n_sc = h.shape[0]
    sigma2_sc = sigma2_nominal / n_sc
    eff = effective_channels(sol, h)
    n_streams = sol.n_streams

    cov = np.einsum("kjsr,kjsc->ksrc", eff, eff.conj())
    cov = cov + sigma2_sc * np.eye(2)
    kk = np.arange(n_streams)
    w = _normalize(_solve_stack(cov, eff[kk, kk]))

    z = np.abs(np.einsum("ksr,kjsr->kjs", w.conj(), eff)) ** 2
    sig = z[kk, kk].sum(axis=1)
    intf = z.sum(axis=1).sum(axis=1) - z[kk, kk].sum(axis=1)
    return sig / (intf + sigma2_nominal)


def leakage_db(sol: SchemeSolution, csi) -> np.ndarray:
    """Interference-to-desired power ratio (dB) per stream, using the
    solution's own nominal combiners, aggregated over subcarriers."""
    h = csi.h if hasattr(csi, "h") else np.asarray(csi, dtype=complex)
    eff = effective_channels(sol, h)
    z = np.abs(np.einsum("ksr,kjsr->kjs", sol.combiners.conj(), eff)) ** 2
    kk = np.arange(sol.n_streams)
    sig = z[kk, kk].sum(axis=1)
    intf = z.sum(axis=1).sum(axis=1) - sig
    return 10.0 * np.log10(intf / sig)
