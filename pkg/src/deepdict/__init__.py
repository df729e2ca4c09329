"""Error-bounded lossy time series compression with learned Bernoulli codes."""

from .btae import (
    BTAE,
    LatentCode,
    ModelConfig,
    PositionalEncodings,
    binarize,
    build_positional,
    load_decoder,
    load_model,
    serialize_decoder,
    serialize_model,
)
from .codec import (
    EncodedStream,
    EntropyModel,
    decode_symbols,
    encode_symbols,
    entropy_bound_bits,
    pack_bits,
    unpack_bits,
)
from .errors import (
    DecodeError,
    DeepDictError,
    LoadError,
    ParseError,
    TrainingDiverged,
    ValidationError,
)
from .pipeline import (
    CompressionReport,
    TrainConfig,
    ca_compress,
    ca_decompress,
    compress,
    compression_ratio,
    decompress,
    parse_container,
    train,
    transfer_compress,
)
from .qel import QELParams, qel_backward, qel_forward, qel_loss, regression_loss
from .quantize import MaaeReport, ResidualBlock, dequantize, quantize, verify_maae
from .series import (
    SyntheticSpec,
    TimeSeries,
    WindowBatch,
    flatten_multivariate,
    load_series,
    save_series,
    synthesize_polynomial,
    synthesize_random_walk,
    unflatten_multivariate,
    window,
)

__version__ = "0.1.0"
