"""loopforge: 3D shapes as sequences of planar cross-section loops.

Slice triangle meshes into stacks of closed 2D contours, train a small
transformer VAE on the resulting token sequences, decode autoregressively
with mid-decode loop edits, and export oriented point clouds ready for
surface reconstruction.
"""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    DatasetQualityError,
    DegenerateLoopError,
    EditRangeError,
    EmptyShapeError,
    InvalidInputError,
    LoopForgeError,
    NonManifoldSliceError,
    NumericalHealthError,
    OrphanLoopError,
    ParseError,
    PlaneOverflowError,
    SequenceLengthError,
    SessionStateError,
    ShapeError,
)
from .geometry import (
    Mesh,
    PlaneList,
    SlicePlane,
    canonicalize_loop,
    from_plane_coords,
    load_obj,
    plane_basis,
    point_in_loop,
    points_in_loop,
    resample_loop,
    signed_area,
    slice_mesh,
    to_plane_coords,
)
from .meshes import (
    box_mesh,
    cylinder_mesh,
    merge_meshes,
    revolve_mesh,
    torus_mesh,
    torus_segment_mesh,
)
from .sequence import (
    LoopSequence,
    decode_sequence,
    deserialize,
    encode_sequence,
    serialize,
    token_pack,
    token_unpack,
)
from .data import (
    DatasetConfig,
    ShapeRecord,
    build_dataset,
    load_dataset,
    make_plane_schedule,
    normalize_mesh,
)
from .model import (
    LoopModel,
    ModelConfig,
    Posterior,
    full_scale_config,
    kl_anneal,
    load_checkpoint,
    loss_gradcheck,
    loss_kl,
    loss_recon,
    lr_schedule,
    reparameterize,
    save_checkpoint,
    train,
)
from .decode import (
    DecodeSession,
    EosStop,
    FreezePrefix,
    InsertLoops,
    PlaneCountStop,
    ReplaceLoop,
    Scale,
    Translate,
    apply_edit,
    edit_to_json,
    interpolate,
    make_insert,
    make_replace,
    new_session,
    parse_edit_script,
    rewind,
    run,
    sample,
    step,
    to_sequence,
    transplant,
)
from .recon import (
    OrientedPointCloud,
    cap_fill,
    chamfer,
    estimate_normals,
    export_ply,
    flip_inner_loops,
    load_ply,
    merge_clouds,
    oriented_cloud,
    sample_loop_points,
)
