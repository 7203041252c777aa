"""depth-adapter: export monocular metric depth rasters in the mapcore
exchange formats."""

__version__ = "0.1.0"

from .export import AdapterConfig, ExportResult, export_depth
from .models import AdapterError, ModelUnavailableError, load_model
