"""OFDM frame construction, 16QAM mapping, pilot-based estimation and MMSE
receive combining.

The frame (38 subcarriers, 312.5 kHz spacing, 0.48 us CP) carries, in time
order: 10 payload symbols, one demodulation-pilot symbol per stream, 10
more payload symbols, then 6 sequential CSI-pilot symbols (one per transmit
antenna, interference-free).  20 payload symbols x 38 subcarriers x 4 bits
give exactly two 1520-bit codewords per stream.  The simulator works on
per-subcarrier flat coefficients; the cyclic prefix constraint is enforced
by the channel model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, herm_solve_batched

N_SUBCARRIERS = 38
SUBCARRIER_SPACING_HZ = 312.5e3
CP_SECONDS = 0.48e-6
PAYLOAD_SYMBOLS = 20
CSI_PILOT_SYMBOLS = 6
BITS_PER_QAM = 4

# Seed of the fixed, publicly known pilot sequences (not a secret; dumped by
# the CLI for conformance checks).
PILOT_SEED = 0x70AD5


@dataclass(frozen=True)
class FrameLayout:
    """Symbol-level frame geometry for a given number of active streams."""

    n_streams: int
    n_subcarriers: int = N_SUBCARRIERS
    payload_symbols: int = PAYLOAD_SYMBOLS
    csi_pilot_symbols: int = CSI_PILOT_SYMBOLS

    def __post_init__(self):
        if not 1 <= self.n_streams <= 6:
            raise ValueError("n_streams must be in 1..6")

    @property
    def demod_pilot_symbols(self) -> int:
        return self.n_streams

    @property
    def n_symbols(self) -> int:
        return self.payload_symbols + self.demod_pilot_symbols + self.csi_pilot_symbols

    @property
    def bits_per_stream(self) -> int:
        return self.payload_symbols * self.n_subcarriers * BITS_PER_QAM

    def payload_slots(self) -> np.ndarray:
        """Time indices of the 20 payload symbols (two blocks of ten)."""
        first = np.arange(10)
        second = np.arange(10) + 10 + self.n_streams
        return np.concatenate([first, second])

    def demod_slot(self, stream: int) -> int:
        return 10 + stream

    def csi_slot(self, antenna: int) -> int:
        return self.payload_symbols + self.n_streams + antenna


@dataclass(frozen=True)
class Frame:
    """Transmit-side frame content: per-stream QAM grids and pilot grids."""

    layout: FrameLayout
    payload: np.ndarray        # (n_streams, 20, n_sc) unit-energy 16QAM
    demod_pilots: np.ndarray   # (n_streams, n_sc) unit-magnitude QPSK
    csi_pilots: np.ndarray     # (6, n_sc) unit magnitude


# ---------------------------------------------------------------------------
# 16QAM (Gray) mapping
# ---------------------------------------------------------------------------

_PAM = np.array([-3.0, -1.0, 1.0, 3.0]) / np.sqrt(10.0)
# Gray labels per axis: bit pair (b_hi, b_lo) -> level index.
# 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
_GRAY_LEVEL = np.array([0, 1, 3, 2])

# Full constellation table indexed by the 4-bit label b0 b1 b2 b3
# (b0 b1 select the I axis, b2 b3 the Q axis).
QAM16_TABLE = np.empty(16, dtype=complex)
QAM16_BITS = np.empty((16, 4), dtype=np.uint8)
for _label in range(16):
    _b = [(_label >> (3 - _i)) & 1 for _i in range(4)]
    _i_lvl = _GRAY_LEVEL[2 * _b[0] + _b[1]]
    _q_lvl = _GRAY_LEVEL[2 * _b[2] + _b[3]]
    QAM16_TABLE[_label] = _PAM[_i_lvl] + 1j * _PAM[_q_lvl]
    QAM16_BITS[_label] = _b


def qam16_map(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped 16QAM, average energy one; 0000 maps to (-3-3j)/sqrt(10)."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    if bits.size % BITS_PER_QAM:
        raise ValueError("bit count must be a multiple of 4")
    quads = bits.reshape(-1, 4)
    labels = (quads[:, 0] << 3) | (quads[:, 1] << 2) | (quads[:, 2] << 1) | quads[:, 3]
    return QAM16_TABLE[labels]


def qam16_demap(symbols: np.ndarray, noise_var) -> np.ndarray:
    """Max-log LLRs per bit; positive means bit 0 (decoder convention).

    noise_var may be a scalar or an array broadcastable to symbols' shape
    (e.g. per-subcarrier variances against a (n_symbols, n_sc) grid).
    """
    symbols = np.asarray(symbols, dtype=complex)
    noise_var = np.asarray(noise_var, dtype=float)
    if np.any(noise_var <= 0):
        raise ValueError("noise_var must be positive")
    nv = np.broadcast_to(noise_var, symbols.shape).ravel()
    flat = symbols.ravel()
    d2 = np.abs(flat[:, None] - QAM16_TABLE[None, :]) ** 2
    llrs = np.empty((flat.size, 4))
    for b in range(4):
        ones = QAM16_BITS[:, b] == 1
        llrs[:, b] = (d2[:, ones].min(axis=1) - d2[:, ~ones].min(axis=1)) / nv
    return llrs.ravel()


def qam16_hard_bits(symbols: np.ndarray) -> np.ndarray:
    """Minimum-distance hard decisions, as bits."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    d2 = np.abs(symbols[:, None] - QAM16_TABLE[None, :]) ** 2
    return QAM16_BITS[d2.argmin(axis=1)].ravel()


# ---------------------------------------------------------------------------
# Pilots and frames
# ---------------------------------------------------------------------------

def demod_pilot_sequence(stream: int, n_subcarriers: int = N_SUBCARRIERS) -> np.ndarray:
    """Deterministic unit-magnitude QPSK pilot for one stream."""
    g = RngStream(PILOT_SEED).child("demod-pilot", stream).generator()
    phases = g.integers(0, 4, size=n_subcarriers)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * phases))


def csi_pilot_sequence(antenna: int, n_subcarriers: int = N_SUBCARRIERS) -> np.ndarray:
    """Known CSI probe per transmit antenna (all ones)."""
    return np.ones(n_subcarriers, dtype=complex)


def build_frame(payload_bits: np.ndarray, layout: FrameLayout) -> Frame:
    """Map coded bits onto the frame grid in time-then-frequency order.

    payload_bits is (n_streams, 3040); bits fill subcarriers of payload
    symbol 0 first, then symbol 1, and so on.
    """
    payload_bits = np.asarray(payload_bits, dtype=np.uint8)
    if payload_bits.shape != (layout.n_streams, layout.bits_per_stream):
        raise ValueError(
            f"payload must be ({layout.n_streams}, {layout.bits_per_stream}) bits")
    grids = np.empty((layout.n_streams, layout.payload_symbols, layout.n_subcarriers),
                     dtype=complex)
    for j in range(layout.n_streams):
        grids[j] = qam16_map(payload_bits[j]).reshape(
            layout.payload_symbols, layout.n_subcarriers)
    demod = np.stack([demod_pilot_sequence(j, layout.n_subcarriers)
                      for j in range(layout.n_streams)])
    csi = np.stack([csi_pilot_sequence(a, layout.n_subcarriers) for a in range(6)])
    return Frame(layout=layout, payload=grids, demod_pilots=demod, csi_pilots=csi)


def extract_payload_bits(frame: Frame) -> np.ndarray:
    """Inverse of build_frame's mapping (hard decisions on clean grids)."""
    out = np.empty((frame.layout.n_streams, frame.layout.bits_per_stream), dtype=np.uint8)
    for j in range(frame.layout.n_streams):
        out[j] = qam16_hard_bits(frame.payload[j].ravel())
    return out


def assemble_tx_grid(frame: Frame, precoders: np.ndarray,
                     csi_amplitude: float) -> np.ndarray:
    """Per-branch transmit grid (6, n_symbols, n_sc).

    precoders is (n_streams, n_sc, 6) and already carries the per-stream
    power scaling; the CSI slot of antenna a carries csi_amplitude on that
    antenna alone.
    """
    layout = frame.layout
    x = np.zeros((6, layout.n_symbols, layout.n_subcarriers), dtype=complex)
    slots = layout.payload_slots()
    # payload: x[a, t, s] = sum_j precoders[j, s, a] * payload[j, t, s]
    x[:, slots, :] = np.einsum("jsa,jts->ats", precoders, frame.payload)
    for j in range(layout.n_streams):
        x[:, layout.demod_slot(j), :] = (precoders[j].T * frame.demod_pilots[j][None, :])
    for a in range(6):
        x[a, layout.csi_slot(a), :] = csi_amplitude * frame.csi_pilots[a]
    return x


def propagate(tx_grid: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Apply the per-subcarrier flat channel: returns (n_symbols, n_sc, 6 rx)."""
    # y[t, s, r] = sum_a h[s, r, a] x[a, t, s]
    return np.einsum("sra,ats->tsr", h, tx_grid)


# ---------------------------------------------------------------------------
# Estimation and combining
# ---------------------------------------------------------------------------

def csi_estimate(csi_observations: np.ndarray, pilots: np.ndarray,
                 pilot_amplitude: float = 1.0) -> np.ndarray:
    """Least-squares channel estimate from interference-free CSI pilots.

    csi_observations[a, s, r] is what antenna r received on subcarrier s
    while probe antenna a was transmitting; returns h_hat[s, r, a] = y / p.
    Under additive noise of variance v the estimation-error variance is
    v / |p|^2 per entry.
    """
    y = np.asarray(csi_observations, dtype=complex)
    p = pilot_amplitude * np.asarray(pilots, dtype=complex)
    est = y / p[:, :, None]
    return np.transpose(est, (1, 2, 0))


def demod_estimate(pilot_observations: np.ndarray, pilots: np.ndarray) -> np.ndarray:
    """Effective (precoded) channel of every stream into one receiver.

    pilot_observations[j, s, r] is the receiver's view of stream j's demod
    pilot on subcarrier s, antenna r; returns g_hat[j, s, r] including the
    stream's precoder and power.
    """
    y = np.asarray(pilot_observations, dtype=complex)
    p = np.asarray(pilots, dtype=complex)
    return y / p[:, :, None]


def mmse_combine(effective: np.ndarray, desired: int, noise_var: float) -> tuple:
    """Per-subcarrier MMSE combiner for one stream, unit-gain normalized.

    effective is (n_streams, n_sc, n_rx) from demod_estimate; the combiner
    w solves (sum_j g_j g_j' + noise_var I) w = g_desired and is scaled so
    w' g_desired = 1.  Returns (w, residual) where residual[s] is the
    predicted interference-plus-noise power at the combiner output.
    """
    g = np.asarray(effective, dtype=complex)
    n_streams, n_sc, n_rx = g.shape
    cov = np.einsum("jsr,jsc->src", g, g.conj())
    cov += noise_var * np.eye(n_rx)[None, :, :]
    w0 = herm_solve_batched(cov, g[desired])
    gain = np.einsum("sr,sr->s", w0.conj(), g[desired])
    w = w0 / np.conj(gain)[:, None]
    # After unit-gain scaling, output power w'Rw splits into 1 (desired,
    # |w'g|^2 = 1) plus interference-plus-noise.
    out_power = np.real(np.einsum("sr,src,sc->s", w.conj(), cov, w))
    residual = np.maximum(out_power - 1.0, 1e-300)
    return w, residual


def combine(received: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Apply a per-subcarrier combiner to (n_symbols, n_sc, n_rx) samples."""
    return np.einsum("tsr,sr->ts", received, w.conj())
