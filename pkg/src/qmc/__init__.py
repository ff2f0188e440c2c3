"""qmc: INT8 quantization, entropy analysis, entropy coding, and a
verifiable container format for model tensors, with loading benchmarks."""

from .errors import (
    CapabilityError,
    FormatError,
    IntegrityError,
    QmcError,
    ValidationError,
)
from .tensorio import (
    ChannelStats,
    SynthSpec,
    Tensor,
    TensorMap,
    load_model,
    save_model,
    synth_activation,
    synth_activation_stats,
    synth_weights,
)
from .entropy import (
    EntropyReport,
    Histogram,
    entropy_bits,
    entropy_report,
    excess_kurtosis,
    histogram,
    ideal_compressed_size,
)
from .quant import (
    ChannelWise,
    ErrorReport,
    QuantizedTensor,
    Smoothed,
    SmoothingVector,
    TensorWise,
    apply_smoothing,
    compute_smoothing_factors,
    dequantize,
    quant_error,
    quantize_channel_wise,
    quantize_smoothed,
    quantize_tensor_wise,
)
from .codecs import (
    Blob,
    SpeedReport,
    available_codecs,
    bench_codec_speed,
    compress,
    compression_ratio,
    decompress,
    normalize_counts,
    total_ratio_vs_f32,
)

__version__ = "0.1.0"
