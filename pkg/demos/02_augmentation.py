# %% [markdown]
# # Augmenting a track
#
# Each training track contributes its ten original slices plus nine
# half-overlapping slices and ten slices of a copy pitched up one semitone.

# %%
import numpy as np

from genreforge.augment import build_augmented_set, pitch_shift, provenance_histogram, semitone_ratio
from genreforge.spectrogram import Spectrogram

rng = np.random.default_rng(0)
spec = Spectrogram(rng.uniform(0, 1, (128, 1498)).astype(np.float32), source_id="noise")

slices = build_augmented_set(spec, 10)
print(len(slices), "slices:", provenance_histogram(slices))
print("offsets:", [s.offset_frames for s in slices if s.provenance != "pitch_shift"])

# %% [markdown]
# The pitch shift stretches the frequency axis by 2^(1/12). A single lit
# band moves up by roughly that factor.

# %%
values = np.zeros((128, 4), np.float32)
values[60] = 1.0
shifted = pitch_shift(Spectrogram(values), 1).values[:, 0]
print("ratio:", semitone_ratio(1))
print("lit rows after shift:", np.flatnonzero(shifted), "weights:", np.round(shifted[shifted > 0], 3))
