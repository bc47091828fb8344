# %% [markdown]
# # From waveform to grayscale spectrogram
#
# A pure tone goes through the short-time Fourier transform and the
# 128-band grayscale mapping. We check where its energy ends up.

# %%
import numpy as np

from genreforge.audio import AudioClip, CANONICAL_RATE
from genreforge.spectrogram import make_spectrogram, slice_track, stft_magnitude

rate = CANONICAL_RATE
t = np.arange(5 * rate) / rate
clip = AudioClip(0.5 * np.sin(2 * np.pi * 1000.0 * t), rate)

# %% [markdown]
# The magnitude grid has one row per FFT bin (the DC bin is left out) and
# 50 frames per second.

# %%
mag = stft_magnitude(clip)
print("magnitude grid:", mag.shape)
peak_row = int(np.argmax(mag[:, 10]))
print("peak row", peak_row, "->", (peak_row + 1) * rate / 1024, "Hz")

# %% [markdown]
# Averaging groups of four rows gives 128 bands. Decibels relative to the
# loudest cell are clipped at -80 and rescaled to [0, 1].

# %%
spec = make_spectrogram(clip, source_id="tone")
print("spectrogram:", spec.values.shape, "frames/s:", spec.frames_per_second)
print("brightest band:", int(np.argmax(spec.values[:, 10])))
print("value range:", float(spec.values.min()), float(spec.values.max()))

# %%
slices = slice_track(spec, 1)
print("one 2.56 s slice:", slices[0].values.shape)
