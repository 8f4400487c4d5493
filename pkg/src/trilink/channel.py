"""Synthetic 6x6 three-cell channel model and channel trace files.

The model draws, per batch, a link geometry (large-scale gains calibrated
to a target raw-SNR range) and then per-frame small-scale realizations:
exponentially decaying i.i.d. complex Gaussian delay taps whose 38-point
DFT is the per-subcarrier frequency response.  Frame-to-frame evolution is
a first-order Gauss-Markov process on the taps.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream

N_SUBCARRIERS = 38
N_BS = 3
N_MS = 3
ANT_PER_NODE = 2
N_TX = N_BS * ANT_PER_NODE
N_RX = N_MS * ANT_PER_NODE

# Delay taps must fit inside the cyclic prefix: 0.48 us at the 38 x 312.5 kHz
# sample-rate equivalent gives floor(0.48e-6 * 38 * 312.5e3) = 5 taps.
MAX_TAPS = int(0.48e-6 * N_SUBCARRIERS * 312.5e3)

TRACE_MAGIC = b"CHNTRACE"
TRACE_VERSION = 1
_HEADER = struct.Struct("<6I")
CSV_COLUMNS = ("batch", "frame", "subcarrier", "rx", "tx", "re", "im")


class TraceError(Exception):
    """Base class for trace-file problems."""


class TraceHeaderError(TraceError):
    """Magic string or header is malformed."""


class TraceDimensionError(TraceError):
    """Header dimensions do not match the 38 x 6 x 6 system."""


class TraceTruncatedError(TraceError):
    """Payload shorter (or longer) than the header promises."""


@dataclass(frozen=True)
class ChannelModelConfig:
    """Shape parameters of the synthetic channel.

    Defaults: mild frequency selectivity inside the cyclic prefix, very high
    frame-to-frame correlation (static terminals, 0.1 s frame spacing) and
    adjacent-cell interference a little below serving power with a strong
    log-normal spread.
    """

    n_taps: int = 4
    pdp_decay: float = 0.5
    temporal_rho: float = 0.995
    serving_snr_range_db: tuple = (32.0, 61.0)
    cross_gain_db: float = -10.0
    cross_gain_spread_db: float = 5.0

    def __post_init__(self):
        if not 1 <= self.n_taps <= MAX_TAPS:
            raise ValueError(f"n_taps must be in [1, {MAX_TAPS}] to fit the cyclic prefix")
        if not 0.0 <= self.temporal_rho <= 1.0:
            raise ValueError("temporal_rho must be in [0, 1]")
        if self.pdp_decay <= 0:
            raise ValueError("pdp_decay must be positive")
        lo, hi = self.serving_snr_range_db
        if lo > hi:
            raise ValueError("serving_snr_range_db must satisfy low <= high")
        if self.cross_gain_spread_db < 0:
            raise ValueError("cross_gain_spread_db must be >= 0")

    def tap_profile(self) -> np.ndarray:
        """Per-tap power fractions (sum to one)."""
        p = self.pdp_decay ** np.arange(self.n_taps)
        return p / p.sum()


@dataclass(frozen=True)
class LinkGeometry:
    """Per-batch placement: serving assignment and large-scale power gains.

    gains[ms, bs] is the mean per-subcarrier power gain of the (MS, BS) link;
    raw_snr_db[ms, bs] is the equivalent raw (pre-spatial-processing) SNR.
    """

    serving_map: tuple
    gains: np.ndarray
    raw_snr_db: np.ndarray

    def __post_init__(self):
        if len(self.serving_map) != N_MS:
            raise ValueError("serving_map must assign one BS per MS")
        if self.gains.shape != (N_MS, N_BS):
            raise ValueError("gains must be (n_ms, n_bs)")
        if np.any(self.gains <= 0):
            raise ValueError("gains must be positive")


@dataclass(frozen=True)
class ChannelRealization:
    """Per-frame channel: h[subcarrier, rx, tx] plus the taps that made it.

    taps/tap_var are None for realizations loaded from a trace file; such
    realizations can be analyzed but not evolved further.
    """

    h: np.ndarray
    frame_index: int = 0
    batch_index: int = 0
    taps: np.ndarray | None = field(default=None, repr=False)
    tap_var: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.h.shape != (N_SUBCARRIERS, N_RX, N_TX):
            raise ValueError(f"h must be ({N_SUBCARRIERS}, {N_RX}, {N_TX})")
        if not np.all(np.isfinite(self.h)):
            raise ValueError("channel contains non-finite entries")


def _dft_matrix(n_taps: int) -> np.ndarray:
    sc = np.arange(N_SUBCARRIERS)[:, None]
    tap = np.arange(n_taps)[None, :]
    return np.exp(-2j * np.pi * sc * tap / N_SUBCARRIERS)


def taps_to_freq(taps: np.ndarray) -> np.ndarray:
    """38-point sampled DFT of (n_taps, rx, tx) delay taps."""
    return np.tensordot(_dft_matrix(taps.shape[0]), taps, axes=(1, 0))


def draw_geometry(cfg: ChannelModelConfig, rng: RngStream,
                  p_total: float, sigma2_nominal: float) -> LinkGeometry:
    """Draw per-batch large-scale gains.

    Serving-link raw SNR (total received power over all subcarriers at one
    antenna, relative to the wideband nominal noise power sigma2_nominal,
    with the serving BS transmitting p_total per subcarrier) is uniform in
    serving_snr_range_db.  Cross links sit cross_gain_db below serving with
    a log-normal spread, clamped so no link falls below 0 dB raw SNR.
    """
    g = rng.generator()
    sigma2_sc = sigma2_nominal / N_SUBCARRIERS
    gain_0db = sigma2_sc / p_total

    lo, hi = cfg.serving_snr_range_db
    serving_db = g.uniform(lo, hi, size=N_MS)

    raw_db = np.empty((N_MS, N_BS))
    serving_map = tuple(range(N_MS))
    for ms in range(N_MS):
        raw_db[ms, serving_map[ms]] = serving_db[ms]
    for ms in range(N_MS):
        for bs in range(N_BS):
            if bs == serving_map[ms]:
                continue
            offset = cfg.cross_gain_db + cfg.cross_gain_spread_db * g.standard_normal()
            raw_db[ms, bs] = max(serving_db[ms] + offset, 0.0)

    gains = gain_0db * 10.0 ** (raw_db / 10.0)
    return LinkGeometry(serving_map=serving_map, gains=gains, raw_snr_db=raw_db)


def draw_channel(geom: LinkGeometry, cfg: ChannelModelConfig, rng: RngStream,
                 batch_index: int = 0, frame_index: int = 0) -> ChannelRealization:
    """Draw a fresh small-scale realization for every antenna pair.

    Tap powers decay exponentially and sum to the link's large-scale gain,
    so the mean per-subcarrier power E|h|^2 equals that gain.
    """
    profile = cfg.tap_profile()
    link_gain = np.repeat(np.repeat(geom.gains, ANT_PER_NODE, axis=0), ANT_PER_NODE, axis=1)
    tap_var = profile[:, None, None] * link_gain[None, :, :]

    g = rng.generator()
    shape = (cfg.n_taps, N_RX, N_TX)
    z = (g.standard_normal(shape) + 1j * g.standard_normal(shape)) / np.sqrt(2.0)
    taps = z * np.sqrt(tap_var)
    return ChannelRealization(h=taps_to_freq(taps), frame_index=frame_index,
                              batch_index=batch_index, taps=taps, tap_var=tap_var)


def evolve_channel(prev: ChannelRealization, cfg: ChannelModelConfig,
                   rng: RngStream) -> ChannelRealization:
    """One Gauss-Markov step: t' = rho t + sqrt(1 - rho^2) w, w stationary."""
    if prev.taps is None or prev.tap_var is None:
        raise ValueError("realization carries no taps (loaded from trace?); cannot evolve")
    rho = cfg.temporal_rho
    g = rng.generator()
    z = (g.standard_normal(prev.taps.shape) + 1j * g.standard_normal(prev.taps.shape)) / np.sqrt(2.0)
    taps = rho * prev.taps + np.sqrt(1.0 - rho * rho) * np.sqrt(prev.tap_var) * z
    return ChannelRealization(h=taps_to_freq(taps), frame_index=prev.frame_index + 1,
                              batch_index=prev.batch_index, taps=taps, tap_var=prev.tap_var)


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------

def _trace_grid(realizations) -> tuple:
    """Validate rectangular (batch, frame) coverage; return (n_batches, n_frames)."""
    if not realizations:
        raise ValueError("cannot save an empty trace")
    keys = [(r.batch_index, r.frame_index) for r in realizations]
    batches = sorted({b for b, _ in keys})
    frames = sorted({f for _, f in keys})
    expected = [(b, f) for b in batches for f in frames]
    if keys != expected:
        raise ValueError("realizations must cover a full (batch, frame) grid in row-major order")
    return len(batches), len(frames)


def save_trace(path, realizations, fmt: str | None = None) -> None:
    """Write realizations to a trace file (binary by default, CSV if asked).

    fmt=None infers from the suffix: '.csv' selects the text variant.
    """
    realizations = list(realizations)
    n_batches, n_frames = _trace_grid(realizations)
    if fmt is None:
        fmt = "csv" if str(path).endswith(".csv") else "binary"

    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(TRACE_MAGIC)
            fh.write(_HEADER.pack(TRACE_VERSION, n_batches, n_frames,
                                  N_SUBCARRIERS, N_RX, N_TX))
            for r in realizations:
                inter = np.empty(r.h.shape + (2,))
                inter[..., 0] = r.h.real
                inter[..., 1] = r.h.imag
                fh.write(inter.astype("<f8").tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in realizations:
                for sc in range(N_SUBCARRIERS):
                    for rx in range(N_RX):
                        for tx in range(N_TX):
                            c = r.h[sc, rx, tx]
                            w.writerow([r.batch_index, r.frame_index, sc, rx, tx,
                                        repr(float(c.real)), repr(float(c.imag))])
    else:
        raise ValueError(f"unknown trace format {fmt!r}")


def load_trace(path) -> list:
    """Read a trace file (binary or CSV, sniffed from content)."""
    with open(path, "rb") as fh:
        head = fh.read(len(TRACE_MAGIC))
    if head == TRACE_MAGIC:
        return _load_binary(path)
    return _load_csv(path)


def _load_binary(path) -> list:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:len(TRACE_MAGIC)] != TRACE_MAGIC:
        raise TraceHeaderError("bad magic string")
    off = len(TRACE_MAGIC)
    if len(data) < off + _HEADER.size:
        raise TraceHeaderError("file too short for header")
    version, n_batches, n_frames, n_sc, n_rx, n_tx = _HEADER.unpack_from(data, off)
    if version != TRACE_VERSION:
        raise TraceHeaderError(f"unsupported trace version {version}")
    if (n_sc, n_rx, n_tx) != (N_SUBCARRIERS, N_RX, N_TX):
        raise TraceDimensionError(
            f"trace is {n_sc}x{n_rx}x{n_tx}, expected {N_SUBCARRIERS}x{N_RX}x{N_TX}")
    if n_batches < 1 or n_frames < 1:
        raise TraceDimensionError("trace declares an empty grid")
    off += _HEADER.size
    count = n_batches * n_frames * n_sc * n_rx * n_tx * 2
    expected_bytes = count * 8
    if len(data) - off != expected_bytes:
        raise TraceTruncatedError(
            f"payload has {len(data) - off} bytes, expected {expected_bytes}")
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    grid = flat.reshape(n_batches, n_frames, n_sc, n_rx, n_tx, 2)
    out = []
    for b in range(n_batches):
        for f in range(n_frames):
            h = grid[b, f, ..., 0] + 1j * grid[b, f, ..., 1]
            out.append(ChannelRealization(h=np.ascontiguousarray(h),
                                          frame_index=f, batch_index=b))
    return out


def _load_csv(path) -> list:
    try:
        with open(path, "r", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise TraceHeaderError("empty trace file") from None
            if tuple(h.strip() for h in header) != CSV_COLUMNS:
                raise TraceHeaderError(f"bad CSV header {header!r}")
            cells = {}
            for row in reader:
                if not row:
                    continue
                if len(row) != 7:
                    raise TraceTruncatedError(f"malformed CSV row {row!r}")
                b, f, sc, rx, tx = (int(x) for x in row[:5])
                if not (0 <= sc < N_SUBCARRIERS and 0 <= rx < N_RX and 0 <= tx < N_TX):
                    raise TraceDimensionError(f"index out of range in row {row!r}")
                cells[(b, f, sc, rx, tx)] = complex(float(row[5]), float(row[6]))
    except (csv.Error, UnicodeDecodeError, ValueError) as exc:
        raise TraceHeaderError(f"not a trace file: {exc}") from exc
    if not cells:
        raise TraceTruncatedError("trace file contains no coefficients")
    batches = sorted({k[0] for k in cells})
    frames = sorted({k[1] for k in cells})
    out = []
    for b in batches:
        for f in frames:
            h = np.empty((N_SUBCARRIERS, N_RX, N_TX), dtype=complex)
            for sc in range(N_SUBCARRIERS):
                for rx in range(N_RX):
                    for tx in range(N_TX):
                        try:
                            h[sc, rx, tx] = cells[(b, f, sc, rx, tx)]
                        except KeyError:
                            raise TraceTruncatedError(
                                f"missing coefficient (batch={b}, frame={f}, "
                                f"sc={sc}, rx={rx}, tx={tx})") from None
            out.append(ChannelRealization(h=h, frame_index=f, batch_index=b))
    return out
