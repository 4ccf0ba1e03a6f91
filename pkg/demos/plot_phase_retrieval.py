"""
Phase retrieval with a coordinate network
==========================================

Recovers the phase of three thin objects from one in-line hologram. The
network is first pulled towards a broad Gaussian blob, then trained through
the propagation model so that its simulated hologram matches the measured
one. This is a shortened run; the acceptance test trains longer.
"""

import time

import numpy as np

from holomorph import neural_field as nf
from holomorph import synth
from holomorph import trainer as tr
from holomorph.wavefield import OpticalConfig

config = OpticalConfig(width=128, height=128, pitch_x=0.5, pitch_y=0.5)
truth = synth.three_phase_objects(config)
H = synth.phase_object_hologram(truth, 100.0, np.sqrt(0.5), config)

###############################################################################
# A thin slab around the object plane: slices at 99, 100 and 101 um. Only
# the middle slice is free to carry the object; the outer two are boundary
# faces. The network is evaluated in a block around the objects only.
slab = tr.volume_config(config, 100.0, slab_half_depth=1.0)
window = tr.make_window((32.0, 32.0), (29.0, 10.0), slab)
net = nf.init(seed=0, fourier_scale=20.0)
state = tr.init_state(H, net, slab, phi_init=np.pi / 2, window=window,
                      dtype="float32", incident_mode="uniform")

t0 = time.time()
tr.pretrain(state, tr.PriorSpec((32.0, 32.0, 100.0), (16.0, 16.0, 1.0)), epochs=300)
print("pretrain: L_prior = %.2e (%.0f s)" % (state.history[-1].l_prior, time.time() - t0))

###############################################################################
# Physics stage. phi * o on the object slice is the recovered phase.
support = truth > 0
for block in range(4):
    tr.train(state, H, epochs=150, lr=1e-3)
    o, _ = tr.object_volume(state)
    phase = state.phi * o[:, :, 1]
    last = state.history[-1]
    print("epoch %4d  L_data %.2e  L_bc %.2e  phi %.3f  MAE %.3f rad"
          % (state.epoch, last.l_data, last.l_bc, state.phi,
             np.abs(phase - truth)[support].mean()))
