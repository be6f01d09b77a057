"""Generation-server adapter: fine-tune a model on split files and serve
it over the ctxasm wire protocol."""

from .config import AdapterConfig
from .models import AdapterError, IdentityModel, load_model
from .server import make_server, serve
from .training import finetune

__version__ = "0.1.0"
