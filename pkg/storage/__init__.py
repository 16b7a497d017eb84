"""
Storage package for SourceLens run artifacts.

Storage Structure:
    storage/
    ├── models.py        # ArtifactStore - run directory + manifest.json
    ├── field_store.py   # FiberField CSV / raw float64 exports, geodesic paths
    └── fan_store.py     # BoundaryFan CSV exports

Data Flow:
    CLI subcommand → ArtifactStore.run() → field/fan writers → manifest.json
"""
from storage.models import (
    MANIFEST_NAME,
    ArtifactStore,
    load_manifest,
    to_jsonable,
)
from storage.field_store import (
    mode_frame,
    read_field_binary,
    read_field_csv,
    write_field,
    write_field_binary,
    write_path,
)
from storage.fan_store import (
    fan_frame,
    read_fan,
    write_fan,
)

__all__ = [
    # Run directories
    'MANIFEST_NAME',
    'ArtifactStore',
    'load_manifest',
    'to_jsonable',
    # Fields
    'mode_frame',
    'read_field_binary',
    'read_field_csv',
    'write_field',
    'write_field_binary',
    'write_path',
    # Fans
    'fan_frame',
    'read_fan',
    'write_fan',
]
