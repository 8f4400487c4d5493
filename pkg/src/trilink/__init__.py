"""Link-level simulator of a three-cell MIMO-OFDM downlink.

Implements interference alignment (max-SINR), coordinated multi-point and
SIMO/MIMO baseline schemes end-to-end over a synthetic frequency-selective
channel, with a dirty-RF impairment layer, LDPC-coded error-rate metrics
and a measurement-campaign harness that emits the ideal / causal /
EVM-model / measured analysis curves.
"""

__version__ = "0.1.0"
