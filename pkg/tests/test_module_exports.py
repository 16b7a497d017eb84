# tests/test_module_exports.py
"""
Test that package-level imports resolve to the canonical module objects.
"""


def test_core_imports_work():
    """Ensure the solver surface imports from core"""

    from core import (
        DiskGrid,
        FiberField,
        OpticalParams,
        TransportSolver,
        reconstruct,
        simplicity_check,
        solve_poisson_dirichlet,
    )

    assert DiskGrid is not None
    assert FiberField is not None
    assert OpticalParams is not None
    assert TransportSolver is not None
    assert reconstruct is not None
    assert simplicity_check is not None
    assert solve_poisson_dirichlet is not None


def test_error_hierarchy():
    """Configuration and numerical errors share one base class"""

    from core import (
        AdmissibilityError,
        ConfigError,
        DegreeOverflowError,
        NonConvergenceError,
        NumericalFailure,
        SourceLensError,
    )

    assert issubclass(ConfigError, SourceLensError)
    assert issubclass(AdmissibilityError, SourceLensError)
    assert issubclass(NonConvergenceError, NumericalFailure)
    assert issubclass(DegreeOverflowError, NumericalFailure)
    assert issubclass(ConfigError, ValueError)


def test_storage_imports_work():
    """Ensure storage writers import from the package"""

    from storage import ArtifactStore, read_fan, write_fan, write_field

    assert ArtifactStore is not None
    assert write_field is not None
    assert write_fan is not None
    assert read_fan is not None


def test_utils_imports_work():
    """Ensure utils constants and helpers import from the package"""

    from utils import BACKEND_CHOICES, CASE_CHOICES, SUBCOMMANDS, get_rng, validate_config

    assert "oracle" in BACKEND_CHOICES and "lsq" in BACKEND_CHOICES
    assert set(CASE_CHOICES) == {"1", "2", "iso1", "iso2", "general"}
    assert "descent-probe" in SUBCOMMANDS
    assert get_rng is not None
    assert validate_config is not None


def test_every_subcommand_has_a_handler():
    """The CLI choices and the flow handlers agree"""

    from core.experiment_flow import HANDLERS
    from utils import SUBCOMMANDS

    assert set(HANDLERS) == set(SUBCOMMANDS)


def test_imports_are_same_object():
    """Verify imports from different paths point to same objects"""

    from core.transport import TransportSolver as DirectImport
    from core import TransportSolver as PackageImport
    from storage.models import ArtifactStore as DirectStore
    from storage import ArtifactStore as PackageStore
    from ui.render import to_gray as DirectRender
    from ui import to_gray as PackageRender

    assert DirectImport is PackageImport
    assert DirectStore is PackageStore
    assert DirectRender is PackageRender
