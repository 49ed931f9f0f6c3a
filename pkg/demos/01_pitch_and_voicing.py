"""Pitch estimation and voicing decisions on synthetic segments.

Run: python3 demos/01_pitch_and_voicing.py
"""
import numpy as np

from speechdecomp.harmonic import nls_pitch, select_order
from speechdecomp.joint import joint_estimate
from speechdecomp.synthetic import ar_noise, harmonic_tone

rng = np.random.default_rng(0)
fs = 8000
n = 320  # 40 ms

# A 180 Hz tone with five harmonics and a falling spectral envelope.
f0_true = 180 / fs
v = harmonic_tone(f0_true, [1.0, 0.8, 0.5, 0.3, 0.2], rng.uniform(0, 2 * np.pi, 5), n)

# The NLS search returns the best pitch for every candidate order.
nls = nls_pitch(v)
for order in (1, 3, 5, 8):
    print(f"L={order}: f0={nls.f0[order - 1] * fs:7.2f} Hz, "
          f"explained energy {nls.cost[order - 1] / nls.energy:.4f}")

# The penalized criterion then picks the order; 0 would mean unvoiced.
# On exactly noiseless input every order >= 5 leaves only rounding error,
# so the choice among them is arbitrary; a little noise makes it meaningful.
y = v + 0.01 * rng.normal(size=n)
print("selected order at 30+ dB SNR:", select_order(y, nls_pitch(y)))

# Add colored noise at 5 dB and let the joint estimator alternate between
# harmonic fitting and re-estimating the noise spectrum.
noise = ar_noise(rng, [-0.9], n)
noise *= np.sqrt(np.mean(v ** 2) / np.mean(noise ** 2) / 10 ** 0.5)
fit = joint_estimate(v + noise)
print(f"noisy: f0={fit.harmonic.f0 * fs:.2f} Hz, L={fit.harmonic.order}, "
      f"{fit.iterations_used} iteration(s), history {np.round(fit.nls_history, 4)}")

# Pure noise should come back unvoiced nearly every time.
unvoiced = sum(joint_estimate(rng.normal(size=160)).harmonic.order == 0 for _ in range(100))
print(f"white-noise segments judged unvoiced: {unvoiced}/100")
