"""Planar visual odometry toolkit for PointGoal navigation.

Submodules:

* :mod:`pointnav_vo.se2` -- planar rigid transforms and dead reckoning
* :mod:`pointnav_vo.losses` -- regression / geometric-invariance losses
* :mod:`pointnav_vo.depth` -- depth unprojection, discretization, soft projection
* :mod:`pointnav_vo.vo_classical` -- essential-matrix VO with depth scale
* :mod:`pointnav_vo.sim` -- occupancy-grid navigation simulator
* :mod:`pointnav_vo.metrics` -- Success / SPL / SoftSPL and VO error reports
* :mod:`pointnav_vo.trainer` -- affine VO estimator trained on the combined loss
"""

__version__ = "0.1.0"
