"""leobeam: desk-scale simulator for coordinated multi-satellite downlink beamforming.

Modules
-------
channel      Shadowed-Rician channel synthesis (path loss, beam pattern, fading).
beamform     Weighted-sum-rate evaluation and classical precoding baselines.
gnn          Graph-neural beamformer: parameters, forward pass, complexity counts.
train        Unsupervised training loop with hand-written reverse-mode gradients.
accel        Behavioral fixed-point systolic-array accelerator model.
experiments  Config files, experiment drivers, CSV artifacts.
cli          Command-line front end.
"""

__version__ = "0.1.0"

from . import accel, beamform, channel, experiments, gnn, train  # noqa: F401
