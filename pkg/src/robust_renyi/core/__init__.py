from ._base import FloatArray as FloatArray
from ._base import ParametricModel as ParametricModel
from ._base import Sample as Sample
from ._config import RenyiConfig as RenyiConfig
from ._config import get_config as get_config
from ._config import logger as logger
from ._errors import RenyiError as RenyiError
from .quadrature import QuadratureScheme as QuadratureScheme
from .quadrature import QuadratureSpec as QuadratureSpec
