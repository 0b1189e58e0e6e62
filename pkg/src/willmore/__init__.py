"""Free-boundary Willmore disks with small prescribed area.

Numerical library and CLI for constructing disk-type surfaces that meet the
boundary of a smooth domain orthogonally and are critical for the Willmore
energy under an area constraint.  The construction solves a constrained
fourth-order problem on the upper half-sphere against a perturbed background
metric obtained from a boundary chart, then scans the resulting reduced energy
over the domain boundary to locate and track critical points.
"""

__version__ = "0.1.0"
