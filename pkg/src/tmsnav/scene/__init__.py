"""Transform tree, URDF/STL ingestion and periodic synchronisation."""
from .config import SceneConfig, pose_from_mapping
from .stl import (
    CorruptSTLError,
    MeshMetadata,
    STLError,
    UnsupportedSTLFormatError,
    load_stl_metadata,
    write_binary_stl,
)
from .sync import DEFAULT_SYNC_RATE_HZ, SceneSynchronizer
from .tree import (
    ChangeEvent,
    FrameLookupError,
    FrameNode,
    ImmutableRootError,
    MeshRef,
    SceneError,
    StructureError,
    TransformTree,
)
from .urdf import URDFParseError, UnsupportedJointError, load_urdf, parse_urdf
