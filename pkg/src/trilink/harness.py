"""Measurement-campaign orchestration and the offline analysis pipeline.

A campaign runs n_batches batches.  Each batch draws one geometry and an
initial channel; every scheme then runs frames_per_batch frames over the
same channel sequence (the channel evolves between frames).  Frame 0 is
transmitted with canonical default precoders because no feedback exists
yet and is excluded from statistics; frames 1.. use precoders computed
from the previous frame's fed-back channel estimates.  For every scored
frame the harness also computes the three offline curves: SINR-post ideal
(precoders from the current true channel), SINR-post causal (the live,
previous-estimate precoders evaluated on the current true channel) and
SINDR EVM-model (ideal precoders and combiners with impairments injected).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import coding
from . import impairments as imp
from . import metrics as met
from . import phy
from . import precoding as pc
from .numerics import RngStream

SCHEME_ORDER = (pc.Scheme.IA, pc.Scheme.COMP, pc.Scheme.TDMA_SIMO,
                pc.Scheme.TDMA_MIMO, pc.Scheme.ALL_SIMO, pc.Scheme.ALL_MIMO)
CURVES = ("ideal", "causal", "measured", "model")
LDPC_SEED = 1


@dataclass(frozen=True)
class CampaignConfig:
    n_batches: int = 116
    frames_per_batch: int = 5
    schemes: tuple = SCHEME_ORDER
    seed: int = 0
    channel: chan.ChannelModelConfig = field(default_factory=chan.ChannelModelConfig)
    impairments: imp.ImpairmentConfig = field(default_factory=imp.ImpairmentConfig)
    p_total_dbm: float = 15.0
    model_payload_symbols: int = 200
    emit_curves: tuple = CURVES

    def __post_init__(self):
        if self.n_batches < 1:
            raise ValueError("n_batches must be >= 1")
        if self.frames_per_batch < 2:
            raise ValueError("frames_per_batch must be >= 2 (frame 0 carries no feedback)")
        if not self.schemes:
            raise ValueError("at least one scheme must be selected")
        bad = [c for c in self.emit_curves if c not in CURVES]
        if bad:
            raise ValueError(f"unknown curves {bad}")

    @property
    def p_total(self) -> float:
        """Total transmit power per subcarrier (linear mW), +15 dBm default."""
        return 10.0 ** (self.p_total_dbm / 10.0)

    @property
    def sigma2_nominal(self) -> float:
        return self.impairments.sigma2_nominal

    @property
    def sigma2_subcarrier(self) -> float:
        return self.impairments.sigma2_subcarrier


@dataclass
class _StreamRx:
    """Receiver-side outcome of one stream in one frame."""

    sindr_measured: float
    uncoded_error: bool
    coded_error: bool


def _solve_scheme(scheme: pc.Scheme, csi: pc.CsiSnapshot, cfg: CampaignConfig,
                  active_pair: int) -> pc.SchemeSolution:
    if scheme is pc.Scheme.IA:
        return pc.max_sinr_ia(csi, cfg.sigma2_subcarrier, cfg.p_total)
    if scheme is pc.Scheme.COMP:
        return pc.comp_precode(csi, cfg.sigma2_subcarrier, cfg.p_total)
    return pc.default_solution(scheme, cfg.p_total, csi.h.shape[0], active_pair)


def _generate_payload(code, n_streams: int, rng: RngStream) -> tuple:
    """Seeded data known to both ends: info bits and coded frame bits."""
    info = np.empty((n_streams, 2 * coding.K_INFO), dtype=np.uint8)
    coded = np.empty((n_streams, 2 * coding.N_CODE), dtype=np.uint8)
    for j in range(n_streams):
        bits = rng.child("bits", j).generator().integers(0, 2, 2 * coding.K_INFO)
        info[j] = bits.astype(np.uint8)
        coded[j, :coding.N_CODE] = coding.encode(code, info[j, :coding.K_INFO])
        coded[j, coding.N_CODE:] = coding.encode(code, info[j, coding.K_INFO:])
    return info, coded


def _impair_and_receive(tx_grid: np.ndarray, h: np.ndarray, cfg: CampaignConfig,
                        jitter: np.ndarray, rng: RngStream) -> np.ndarray:
    """Dirty-RF chain around the channel; returns (n_symbols, n_sc, 6 rx)."""
    dirty_tx, _ = imp.apply_tx_dirty(tx_grid, cfg.impairments, rng.child("tx"))
    y = phy.propagate(dirty_tx, h)
    yb = np.ascontiguousarray(y.transpose(2, 0, 1))
    yb = imp.apply_rx_dirty(yb, cfg.impairments, rng.child("rx"))
    if cfg.impairments.thermal_enabled:
        var = cfg.sigma2_subcarrier * np.repeat(jitter, chan.ANT_PER_NODE)
        yb = imp.apply_thermal(yb, var, rng.child("thermal"))
    return yb.transpose(1, 2, 0)


def _receive_frame(cfg: CampaignConfig, sol: pc.SchemeSolution, frame: phy.Frame,
                   received: np.ndarray, coded: np.ndarray, info: np.ndarray,
                   code) -> tuple:
    """All mobile-station receivers for one frame.

    Returns (per-stream _StreamRx results, fed-back 6x6 channel estimate).
    """
    layout = frame.layout
    slots = layout.payload_slots()
    csi_fb = np.zeros((layout.n_subcarriers, 6, 6), dtype=complex)
    results: list = [None] * layout.n_streams

    for ms in range(chan.N_MS):
        rx = received[:, :, 2 * ms:2 * ms + 2]
        csi_obs = np.stack([rx[layout.csi_slot(a)] for a in range(6)])
        csi_fb[:, 2 * ms:2 * ms + 2, :] = phy.csi_estimate(
            csi_obs, frame.csi_pilots, np.sqrt(cfg.p_total))

        own = [j for j in range(layout.n_streams) if sol.stream_ms[j] == ms]
        if not own:
            continue
        demod_obs = np.stack([rx[layout.demod_slot(j)] for j in range(layout.n_streams)])
        g_hat = phy.demod_estimate(demod_obs, frame.demod_pilots)
        for j in own:
            w, resid = phy.mmse_combine(g_hat, j, cfg.sigma2_subcarrier)
            out = phy.combine(rx[slots], w)
            evm = met.evm_per_subcarrier(out, frame.payload[j])
            p_eff = 1.0 / np.sum(np.abs(w) ** 2, axis=1)
            sindr = met.sindr_evm(evm, p_eff)

            hard = phy.qam16_hard_bits(out.ravel())
            uncoded_error = bool(np.any(hard != coded[j]))
            llrs = phy.qam16_demap(out, resid[None, :])
            d1, _, _ = coding.decode(code, llrs[:coding.N_CODE])
            d2, _, _ = coding.decode(code, llrs[coding.N_CODE:])
            coded_error = bool(np.any(d1 != info[j, :coding.K_INFO]) or
                               np.any(d2 != info[j, coding.K_INFO:]))
            results[j] = _StreamRx(sindr_measured=sindr,
                                   uncoded_error=uncoded_error,
                                   coded_error=coded_error)
    return results, csi_fb


def _model_sindr(cfg: CampaignConfig, ideal_sol: pc.SchemeSolution, h: np.ndarray,
                 rng: RngStream) -> np.ndarray:
    """EVM-model curve: ideal-CSI precoders and combiners, impairments injected.

    Transmits a longer virtual payload (model_payload_symbols per subcarrier)
    so the EVM estimator's own noise stays well below the curve tolerances.
    """
    n_streams, n_sc = ideal_sol.n_streams, ideal_sol.n_sc
    eff = pc.effective_channels(ideal_sol, h)
    g = rng.child("data").generator()
    labels = g.integers(0, 16, size=(n_streams, cfg.model_payload_symbols, n_sc))
    symbols = phy.QAM16_TABLE[labels]

    x = np.einsum("jsa,jts->ats", ideal_sol.scaled_precoders(), symbols)
    x, _ = imp.apply_tx_dirty(x, cfg.impairments, rng.child("tx"))
    y = phy.propagate(x, h)
    yb = np.ascontiguousarray(y.transpose(2, 0, 1))
    yb = imp.apply_rx_dirty(yb, cfg.impairments, rng.child("rx"))
    if cfg.impairments.thermal_enabled:
        # The model assumes the nominal noise floor (no per-batch jitter).
        yb = imp.apply_thermal(yb, cfg.sigma2_subcarrier, rng.child("thermal"))
    y = yb.transpose(1, 2, 0)

    out = np.empty(n_streams)
    for k in range(n_streams):
        ms = ideal_sol.stream_ms[k]
        w, _ = phy.mmse_combine(eff[k], k, cfg.sigma2_subcarrier)
        r = phy.combine(y[:, :, 2 * ms:2 * ms + 2], w)
        evm = met.evm_per_subcarrier(r, symbols[k])
        p_eff = 1.0 / np.sum(np.abs(w) ** 2, axis=1)
        out[k] = met.sindr_evm(evm, p_eff)
    return out


def _best_bs_flags(first_frame: chan.ChannelRealization, geom: chan.LinkGeometry) -> list:
    """Per-MS flag: serving BS has the highest wideband average channel power."""
    h = first_frame.h
    flags = []
    for ms in range(chan.N_MS):
        rows = h[:, 2 * ms:2 * ms + 2, :]
        power = [np.mean(np.abs(rows[:, :, 2 * bs:2 * bs + 2]) ** 2)
                 for bs in range(chan.N_BS)]
        flags.append(int(np.argmax(power)) == geom.serving_map[ms])
    return flags


def run_batch(cfg: CampaignConfig, batch_index: int) -> tuple:
    """One batch: all schemes over a shared channel sequence.

    Returns (scored FrameMetrics records, the batch's channel realizations).
    """
    root = RngStream(cfg.seed)
    code = coding.construct_code(LDPC_SEED)
    b = batch_index

    geom = chan.draw_geometry(cfg.channel, root.child("geometry", b),
                              cfg.p_total, cfg.sigma2_nominal)
    chans = [chan.draw_channel(geom, cfg.channel, root.child("channel", b, 0), b, 0)]
    for f in range(1, cfg.frames_per_batch):
        chans.append(chan.evolve_channel(chans[-1], cfg.channel,
                                         root.child("channel", b, f)))
    jitter = imp.thermal_jitter_factors(root.child("jitter", b), chan.N_MS,
                                        cfg.impairments.thermal_jitter_db)
    best_bs = _best_bs_flags(chans[0], geom)

    records = []
    for scheme in cfg.schemes:
        si = SCHEME_ORDER.index(scheme)
        active_pair = b % 3
        layout = phy.FrameLayout(scheme.n_streams)
        feedback = None

        for f in range(cfg.frames_per_batch):
            frng = root.child("frame", b, si, f)
            if scheme.is_baseline or feedback is None:
                sol = pc.default_solution(scheme, cfg.p_total,
                                          layout.n_subcarriers, active_pair)
            else:
                sol = _solve_scheme(scheme, pc.CsiSnapshot(feedback, "estimated-previous"),
                                    cfg, active_pair)

            info, coded = _generate_payload(code, scheme.n_streams, frng.child("data"))
            frame = phy.build_frame(coded, layout)
            tx = phy.assemble_tx_grid(frame, sol.scaled_precoders(), np.sqrt(cfg.p_total))
            received = _impair_and_receive(tx, chans[f].h, cfg, jitter,
                                           frng.child("live"))
            rx_results, feedback = _receive_frame(cfg, sol, frame, received,
                                                  coded, info, code)
            if f == 0:
                continue

            if scheme.is_baseline:
                ideal_sol = sol
            else:
                ideal_sol = _solve_scheme(scheme,
                                          pc.CsiSnapshot(chans[f].h, "true-current"),
                                          cfg, active_pair)
            sinr_ideal = pc.sinr_post_of_solution(ideal_sol, chans[f].h,
                                                  cfg.sigma2_nominal)
            sinr_causal = pc.sinr_post_of_solution(sol, chans[f].h,
                                                   cfg.sigma2_nominal)
            sindr_model = _model_sindr(cfg, ideal_sol, chans[f].h,
                                       frng.child("model"))

            for j in range(scheme.n_streams):
                ms = sol.stream_ms[j]
                records.append(met.FrameMetrics(
                    batch=b, frame=f, scheme=scheme.value, stream=j, ms=ms,
                    best_bs=best_bs[ms],
                    sinr_post_ideal_db=float(met.to_db(sinr_ideal[j])),
                    sinr_post_causal_db=float(met.to_db(sinr_causal[j])),
                    sindr_evm_measured_db=float(met.to_db(rx_results[j].sindr_measured)),
                    sindr_evm_model_db=float(met.to_db(sindr_model[j])),
                    uncoded_frame_error=rx_results[j].uncoded_error,
                    coded_frame_error=rx_results[j].coded_error))
    return records, chans


@dataclass
class CampaignResult:
    records: list
    summary_all: dict
    summary_best: dict
    out_dir: str | None = None


def run_campaign(cfg: CampaignConfig, out_dir=None, save_channel_trace: bool = True,
                 progress=None) -> CampaignResult:
    """Run all batches, aggregate, and optionally write the output files.

    Outputs: metrics.csv, summary.txt, trace.bin and one
    cdf_<scheme>_<curve>.dat per emitted curve, computed on the Best-BS
    record selection (the All-data split is reported in summary.txt).
    """
    records = []
    realizations = []
    for b in range(cfg.n_batches):
        recs, chans_b = run_batch(cfg, b)
        records.extend(recs)
        realizations.extend(chans_b)
        if progress is not None:
            progress(b + 1, cfg.n_batches)

    records.sort(key=lambda r: (r.batch, SCHEME_ORDER.index(pc.Scheme(r.scheme)),
                                r.frame, r.stream))
    summary_all = met.aggregate(records, "all")
    try:
        summary_best = met.aggregate(records, "best_bs")
    except ValueError:
        summary_best = {}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        met.write_metrics_csv(os.path.join(out_dir, "metrics.csv"), records)
        met.write_summary(os.path.join(out_dir, "summary.txt"),
                          summary_all, summary_best)
        if save_channel_trace:
            chan.save_trace(os.path.join(out_dir, "trace.bin"), realizations)
        field_of = {"ideal": "sinr_post_ideal_db", "causal": "sinr_post_causal_db",
                    "measured": "sindr_evm_measured_db", "model": "sindr_evm_model_db"}
        chosen = [r for r in records if r.best_bs] or records
        for scheme in cfg.schemes:
            srecs = [r for r in chosen if r.scheme == scheme.value]
            if not srecs:
                continue
            for curve in cfg.emit_curves:
                values = [getattr(r, field_of[curve]) for r in srecs]
                met.write_cdf(os.path.join(
                    out_dir, f"cdf_{scheme.value}_{curve}.dat"), values)
    return CampaignResult(records=records, summary_all=summary_all,
                          summary_best=summary_best, out_dir=out_dir)


def analyze_trace(trace_path, scheme: pc.Scheme, mode: str, out_dir=None,
                  cfg: CampaignConfig | None = None) -> np.ndarray:
    """Recompute one analysis curve on externally supplied channels.

    mode 'ideal' solves on each scored frame's channel; 'causal' solves on
    the previous frame's channel instead; 'evm-model' runs the impairment
    injection recipe on ideal solutions.  The first frame of every batch is
    excluded, mirroring the campaign.  Returns the per-stream dB values and
    optionally writes cdf_<scheme>_<mode>.dat.
    """
    if mode not in ("ideal", "causal", "evm-model"):
        raise ValueError(f"unknown analysis mode {mode!r}")
    cfg = cfg or CampaignConfig()
    reals = chan.load_trace(trace_path)
    batches: dict = {}
    for r in reals:
        batches.setdefault(r.batch_index, []).append(r)
    root = RngStream(cfg.seed)
    si = SCHEME_ORDER.index(scheme)

    values = []
    for b, frames in sorted(batches.items()):
        frames = sorted(frames, key=lambda r: r.frame_index)
        if len(frames) < 2:
            raise ValueError("causal/scored analysis needs at least two frames per batch")
        active_pair = b % 3
        for f in range(1, len(frames)):
            h_now = frames[f].h
            if mode == "causal":
                csi = pc.CsiSnapshot(frames[f - 1].h, "estimated-previous")
            else:
                csi = pc.CsiSnapshot(h_now, "true-current")
            sol = _solve_scheme(scheme, csi, cfg, active_pair)
            if mode == "evm-model":
                sindr = _model_sindr(cfg, sol, h_now,
                                     root.child("frame", b, si, f, "model"))
                values.extend(met.to_db(sindr))
            else:
                sinr = pc.sinr_post_of_solution(sol, h_now, cfg.sigma2_nominal)
                values.extend(met.to_db(sinr))
    values = np.asarray(values)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        tag = mode.replace("evm-model", "model")
        met.write_cdf(os.path.join(out_dir, f"cdf_{scheme.value}_{tag}.dat"), values)
    return values


# ---------------------------------------------------------------------------
# Flat key-value config files
# ---------------------------------------------------------------------------

_CHANNEL_KEYS = ("n_taps", "pdp_decay", "temporal_rho", "cross_gain_db",
                 "cross_gain_spread_db")
_IMPAIRMENT_KEYS = ("tx_evm_db", "rx_evm_db", "phase_std_deg", "sigma2_nominal",
                    "thermal_jitter_db", "tx_noise_enabled", "rx_noise_enabled",
                    "phase_enabled", "thermal_enabled")
_CAMPAIGN_KEYS = ("seed", "n_batches", "frames_per_batch", "p_total_dbm",
                  "model_payload_symbols")


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_schemes(text: str) -> tuple:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names:
        raise ValueError("empty scheme list")
    try:
        return tuple(pc.Scheme(n) for n in names)
    except ValueError:
        known = ", ".join(s.value for s in SCHEME_ORDER)
        raise ValueError(f"unknown scheme in {text!r}; known: {known}") from None


def config_from_pairs(pairs: dict) -> CampaignConfig:
    """Build a CampaignConfig from flat key-value strings (file or CLI)."""
    chan_kw: dict = {}
    imp_kw: dict = {}
    camp_kw: dict = {}
    snr_lo = snr_hi = None
    for key, value in pairs.items():
        if key in _CHANNEL_KEYS:
            chan_kw[key] = int(value) if key == "n_taps" else float(value)
        elif key == "serving_snr_low_db":
            snr_lo = float(value)
        elif key == "serving_snr_high_db":
            snr_hi = float(value)
        elif key in _IMPAIRMENT_KEYS:
            imp_kw[key] = (_parse_bool(value) if key.endswith("_enabled")
                           else float(value))
        elif key in _CAMPAIGN_KEYS:
            camp_kw[key] = float(value) if key == "p_total_dbm" else int(value)
        elif key == "schemes":
            camp_kw["schemes"] = parse_schemes(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if (snr_lo is None) != (snr_hi is None):
        raise ValueError("serving_snr_low_db and serving_snr_high_db go together")
    if snr_lo is not None:
        chan_kw["serving_snr_range_db"] = (snr_lo, snr_hi)
    return CampaignConfig(channel=chan.ChannelModelConfig(**chan_kw),
                          impairments=imp.ImpairmentConfig(**imp_kw), **camp_kw)


def load_config(path) -> CampaignConfig:
    """Read a flat 'key = value' config file ('#' starts a comment)."""
    pairs = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            pairs[key] = value
    return config_from_pairs(pairs)
