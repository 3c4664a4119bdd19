"""
Corpus, folds and normalization
===============================

Build a small imbalanced corpus, walk the ten leave-one-speaker-out folds
and normalize one fold with statistics from its training speakers only.
"""
from collections import Counter

from speechemo.corpus import compute_stats, make_folds, normalize, oversample, rarest_classes
from speechemo.dsp import stft_log_magnitude
from speechemo.synth import synth_corpus

manifest, clips = synth_corpus(seed=1, n_per_class=12, imbalanced=True)
print("class counts:", dict(Counter(u.label.name.lower() for u in manifest)))

folds = make_folds(manifest)
for fold in folds[:4]:
    train, val, test = fold.partition(manifest)
    print(f"fold {fold.fold_id:2d}: test {fold.test}, val {fold.val}, "
          f"{len(train)} train / {len(val)} val / {len(test)} test")

# the two rarest training classes get repeated
fold = folds[0]
train, val, test = fold.partition(manifest)
rare = rarest_classes(train)
boosted = oversample(train, rare, factor=2)
print("oversampled", sorted(e.name.lower() for e in rare), f"{len(train)} -> {len(boosted)} items")

# normalization statistics never see the validation or test speaker
specs = {u.id: stft_log_magnitude(clips[u.id]) for u in manifest}
stats = compute_stats(specs[u.id] for u in train)
print(f"train-only stats: mean {stats.mean:.3f}, std {stats.std:.3f}")
z = normalize(specs[test[0].id], stats).values
print(f"normalized test utterance: mean {z.mean():.3f}, std {z.std():.3f}")
