# %% [markdown]
# # Voting against SVM stacking
#
# Per-track decisions come either from a majority vote over segment
# predictions or from a linear SVM fitted to the averaged 1024-d features.
# Here the "segments" are simulated, so the example runs instantly.

# %%
import numpy as np

from genreforge.ensemble import average_features, svm_predict, svm_train, track_accuracy, vote_track

rng = np.random.default_rng(0)
k, dim, n_tracks = 3, 16, 60
centres = rng.standard_normal((k, dim))


def make_track(label):
    feats = centres[label] + rng.standard_normal((10, dim)) * 4.0
    logits = feats @ centres.T
    probs = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs /= probs.sum(axis=1, keepdims=True)
    return feats, probs


tracks = [(t % k, *make_track(t % k)) for t in range(n_tracks)]
train_part, test_part = tracks[:40], tracks[40:]

# %%
svm = svm_train(np.stack([average_features(f) for _, f, _ in train_part]),
                labels=[lab for lab, _, _ in train_part], C=1.0, seed=0)

vote_results, svm_results = [], []
for i, (label, feats, probs) in enumerate(test_part):
    segs = [(int(np.argmax(p)), p) for p in probs]
    vote_results.append((str(i), vote_track(segs), label))
    svm_results.append((str(i), svm_predict(svm, average_features(feats)), label))

print("vote track accuracy:", track_accuracy(vote_results))
print("svm track accuracy: ", track_accuracy(svm_results))
