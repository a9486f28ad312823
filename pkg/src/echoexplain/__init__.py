"""Left-ventricle geometry, explanation texts and explanation scoring for echocardiography."""
from .config import Thresholds, load_thresholds
from .contour_io import CardiacCycle, ContourFrame, parse_cycle, parse_volume_tracings
from .errors import ComputationError, EchoExplainError, EndpointError, InputError
from .geometry import AttributeVector, compute_attribute_vector, disk_volume, ejection_fraction
from .narrative import load_registry, make_bundle
from .nle_eval import evaluate_pairs, extract_statuses, flesch_reading_ease

__version__ = "0.1.0"

__all__ = [
    "AttributeVector", "CardiacCycle", "ComputationError", "ContourFrame", "EchoExplainError",
    "EndpointError", "InputError", "Thresholds", "compute_attribute_vector", "disk_volume",
    "ejection_fraction", "evaluate_pairs", "extract_statuses", "flesch_reading_ease",
    "load_registry", "load_thresholds", "make_bundle", "parse_cycle", "parse_volume_tracings",
]
