"""Video corruption simulation and a detector robustness benchmark."""
from .codec import Bitstream, GopConfig, decode, encode, encode_at_bitrate, measure_bitrate
from .corruptions import Regime, apply_pipeline, parse_regime, regime_catalog
from .detector import AugmentationSpec, DetectorModel, TrainConfig, classify, extract_features, score, train
from .frame import Clip, Frame, rescale
from .harness import EvalReport, EvalResult, emit_report, evaluate, gabon_case
from .synthcorpus import CorpusParams, gen_corpus
from .transform import psnr
from .y4m import read_y4m, write_y4m

__version__ = "0.1.0"
