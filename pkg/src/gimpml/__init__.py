"""Host-independent, non-destructive layered image editing engine.

The engine keeps every edit as a new layer over immutable source layers,
provides the classical tools directly, and types eleven ML-assisted tasks as
contracts a backend must satisfy: in-process deterministic stubs ship here,
real models can sit behind the TCP wire protocol.
"""

from .core import (
    ImageBuffer,
    Layer,
    LayerStack,
    Tensor,
    add_layer,
    composite,
    from_tensor,
    to_tensor,
)
from .ops import (
    KMeansConfig,
    RegionMask,
    colorize,
    desaturate,
    edge_detect,
    gaussian_blur,
    grayscale,
    hue_saturation,
    invert,
    kmeans_cluster,
    resize_bicubic,
    selective_apply,
)
from .maps import (
    FACE_PALETTE,
    VOC_PALETTE,
    DisparityMap,
    Hint,
    HintSet,
    LabelMap,
    Trimap,
    class_mask,
    decode_trimap,
    encode_trimap,
    normalize_disparity,
    parse_hint_layer,
    rasterize_hints,
    relight,
)
from .backend import (
    DevicePolicy,
    StubBackend,
    TaskError,
    TaskKind,
    TaskRequest,
    TaskResponse,
    TransportError,
    resolve_device,
)
from .protocol import BackendServer, RemoteBackend
from .pipeline import (
    BUILTINS,
    PipelineSpec,
    PipelineStepError,
    PipelineValidationError,
    Step,
    builtin,
    run_pipeline,
    spec_from_json,
    spec_to_json,
)
from .project import (
    load_disparity,
    load_image,
    load_labelmap,
    load_project,
    save_disparity,
    save_image,
    save_labelmap,
    save_project,
)

__version__ = "0.1.0"
