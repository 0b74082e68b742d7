"""Spatter detection and process maps from laser powder bed fusion melt-pool fields.

Stages: :mod:`fieldstore` (bundles), :mod:`segment` (connected components),
:mod:`track` (frame linking), :mod:`mpsample` (melt-pool surface sampling),
:mod:`dataset`, :mod:`learners`, :mod:`explain`, :mod:`synthgen` (calibrated
surrogate fields) and :mod:`procmap` (screening).
"""

__version__ = "0.1.0"
