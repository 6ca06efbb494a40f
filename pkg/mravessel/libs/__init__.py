from mravessel.libs.exceptions import *
from mravessel.libs.volume import *
from mravessel.libs.config import PipelineConfig, default_config_path
from mravessel.libs.report import EvalReport, TubeScores
