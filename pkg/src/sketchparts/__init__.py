"""Part-level parsing of freehand object sketches.

A small numpy-backed stack: taped autodiff tensors, raster tooling for
sketchifying annotated photos, a shared-trunk/expert-branch segmentation
model with hard routing and a pose side task, class-balanced training,
IOU and pose metrics, attribute-graph re-ranking for retrieval, and
template-based sketch descriptions.
"""

__version__ = "0.1.0"
