"""
Checking backpropagation
========================

Compare the analytic gradients of a small convolutional + Bi-LSTM network
against central finite differences, with and without sequence-wise batch
normalization.
"""
from dataclasses import replace

import numpy as np

from speechemo.gradcheck import check_gradients, miniature
from speechemo.net import NetworkConfig

base = miniature(NetworkConfig())
for bn in (False, True):
    config = replace(base, use_seq_batchnorm=bn)
    errors = check_gradients(config, seed=0, dtype=np.float64)
    worst = max(errors, key=errors.get)
    print(f"batchnorm={bn}: {len(errors)} tensors, worst {worst} at {errors[worst]:.2e}")

# float32 backprop against a float64 reference
errors = check_gradients(base, seed=0, dtype=np.float32)
print(f"float32 analytic vs float64 numeric: {max(errors.values()):.2e}")
