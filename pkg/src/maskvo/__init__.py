"""Visual odometry from free-space masks: virtual range scans fused with
ground-plane feature matching in a keyframe tracker, plus a deterministic
simulator and trajectory evaluation tools."""

__version__ = "0.1.0"
