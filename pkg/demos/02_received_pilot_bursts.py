"""
The full-duplex received signal
===============================

Both terminals transmit pilots at the same time, so each receiver sees the
other side's burst through the surface plus its own burst bounced back, then
hardware distortion and thermal noise on top.  This script takes one burst
apart, checks the noise calibration, and closes with a least-squares estimate
of the cascaded channel.
"""

import numpy as np

from fdris import (
    ChannelRealization,
    NoiseParams,
    RisConfig,
    gen_pn_sequence,
    ls_estimate_pair,
    nmse,
    synthesize_received_pilots,
)

rng = np.random.default_rng(7)
n_elements, m_pilots = 16, 16

channel = ChannelRealization.sample(n_elements, k_factor=10.0, rng=rng)
surface = RisConfig(n_elements=n_elements)
pilots = gen_pn_sequence(m_pilots)

# A noiseless burst is purely the two deterministic terms.
clean = synthesize_received_pilots(channel, surface, pilots, pilots,
                                   1.0, 1.0, NoiseParams.noiseless(), rng)
print("first three clean samples at the terminal:")
print(np.round(clean.at_terminal[:3], 3))

# With a target SNR the impairment power is split evenly between hardware
# distortion and thermal noise, scaled off the desired-signal power.
noisy = synthesize_received_pilots(channel, surface, pilots, pilots,
                                   1.0, 1.0, NoiseParams.for_snr(0.0), rng)
parts = noisy.terminal_parts
print("\nper-part average power at 0 dB target:")
for name in ("desired", "self_interference", "distortion", "thermal"):
    power = np.mean(np.abs(getattr(parts, name)) ** 2)
    print(f"  {name:18s} {power:12.3f}")

# Averaged over many bursts, desired over (distortion + thermal) lands on
# the configured ratio.
desired, impairment = 0.0, 0.0
for _ in range(2000):
    draw = ChannelRealization.sample(n_elements, 10.0, rng)
    got = synthesize_received_pilots(draw, surface, pilots, pilots,
                                     1.0, 1.0, NoiseParams.for_snr(0.0), rng).terminal_parts
    desired += np.mean(np.abs(got.desired) ** 2)
    impairment += np.mean(np.abs(got.distortion) ** 2 + np.abs(got.thermal) ** 2)
print(f"\nmeasured SNR over 2000 bursts: {10 * np.log10(desired / impairment):+.2f} dB "
      "(target +0.00 dB)")

# Least squares can only return the minimum-norm solution of a rank-one
# system: one complex number of information spread across N elements.
h_hat, g_hat = ls_estimate_pair(noisy.at_terminal, pilots, pilots, n_elements)
print(f"\nleast-squares NMSE on this burst: h {nmse(channel.terminal_link, h_hat):.3f}, "
      f"g {nmse(channel.station_link, g_hat):.3f}")
print("(the learned estimator in demo 03 does substantially better)")
