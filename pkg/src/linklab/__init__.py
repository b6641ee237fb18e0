"""linklab: a link-level OFDM lab with learned receivers and a MAC-learning toy.

Subpackages and modules:
  numerics   - autodiff engine, Adam, checkpoint container
  phy_frame  - constellations, pilot patterns, TTI grid assembly
  channel    - TDL-A doubly selective fading with Jakes time evolution
  fec        - 5G LDPC (BG2) encode, rate matching, BP decoding
  rx_classic - LS estimation, nearest-pilot equalizer, exact Gaussian demap
  rx_neural  - learned demappers/receivers and trainable constellation
  mac_lab    - two-UE MAC protocol-learning environment and metrics
  harness    - config, seeding, sweeps, CSV/SVG emission, CLI
"""

import os as _os

# single-threaded BLAS before numpy ever loads: multi-threaded reductions
# reorder float sums and break byte-identical reruns across machines
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"
