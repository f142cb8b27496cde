"""Multi-orientation region transform descriptors for patchy shapes."""

from .errors import *  # noqa: F401,F403
from .raster import (
    EnclosurePolicy,
    PatchLabelMap,
    PatchyDistanceMap,
    SampledContour,
    ThresholdPolicy,
    compute_pdm,
    export_label_map,
    extract_contour,
    resample_contour,
    segment_patches,
)
from .transform import (
    MortDescriptor,
    MortMatrices,
    SlabSpec,
    compute_mort,
    dft_descriptor,
    extract_descriptor,
    format_descriptors,
    parse_descriptors,
    region_integral,
    slab_for,
)
from .matcher import DescriptorSet, EvalReport, Gallery, classify_1nn, descriptor_distance, evaluate
from .dataset import Manifest, SynthSpec, load_image, load_manifest, synth_shape, transform_mask

__version__ = "0.1.0"
