"""Event-based motion deblurring toolkit: event simulation, blur synthesis,
event voxel representations, EDI inversion, cross-modal channel attention
and image-quality metrics."""

__version__ = "0.1.0"

from .core import (
    Event,
    EventMask,
    EventStream,
    IntensityImage,
    ScerGrid,
    ThresholdMap,
    VoxelGrid,
    log_intensity,
)
from .edi import EdiConfig, edi_denominator, edi_deblur, edi_sequence
from .represent import emgc_combine, event_mask, sbt, scer, scer_from_sbt, stack
from .simulate import FrameSequence, SimConfig, augment_voxels, sample_thresholds, simulate_events, synthesize_blur

__all__ = [
    "Event", "EventMask", "EventStream", "IntensityImage", "ScerGrid", "ThresholdMap",
    "VoxelGrid", "log_intensity", "EdiConfig", "edi_denominator", "edi_deblur",
    "edi_sequence", "emgc_combine", "event_mask", "sbt", "scer", "scer_from_sbt", "stack",
    "FrameSequence", "SimConfig", "augment_voxels", "sample_thresholds", "simulate_events",
    "synthesize_blur",
]
