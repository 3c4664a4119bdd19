"""
Training one fold
=================

Train a reduced network on one leave-one-speaker-out fold of a synthetic
corpus, with VTLP, oversampling and test-time voting, and print per-epoch
progress. Takes a minute or so on one core.
"""
from speechemo.corpus import fold_for
from speechemo.dsp import stft_log_magnitude
from speechemo.net import ConvLayer, NetworkConfig
from speechemo.synth import synth_corpus
from speechemo.training import TrainOptions, run_fold

manifest, clips = synth_corpus(seed=3, n_per_class=60)
specs = {u.id: stft_log_magnitude(clips[u.id]) for u in manifest}

config = NetworkConfig(conv_layers=(ConvLayer(8, (5, 5), (1, 2)), ConvLayer(8, (3, 3), (2, 2))),
                       hidden_size=16)
options = TrainOptions(max_epochs=15, batch_size=8, seed=0)


def show(rec):
    print(f"epoch {rec.epoch}: loss {rec.loss:.3f}, val UA {rec.val_ua:.3f}")


result = run_fold(fold_for(3), list(manifest), specs, config, options, on_epoch=show)
m = result.metrics
print(f"best epoch {result.best_epoch}; test WA {100 * m.wa:.1f}%, UA {100 * m.ua:.1f}%")
print("confusion (rows true, columns predicted):")
print(m.confusion)
