"""Exception hierarchy shared by all modules."""


class ViewPCLError(Exception):
    """Base class for every error raised by this package."""


class InvalidDepth(ViewPCLError, ValueError):
    pass


class OutOfBounds(ViewPCLError, IndexError):
    pass


class RegionMismatch(ViewPCLError, ValueError):
    pass


class EmptyRegion(ViewPCLError, ValueError):
    pass


class ClassAbsent(ViewPCLError, ValueError):
    """The conditioning class has zero induced probability on the region."""

    def __init__(self, class_id: int):
        super().__init__(f"class {class_id} has zero mass on the region")
        self.class_id = class_id


class InfeasibleMarginals(ViewPCLError, ValueError):
    pass


class BothAbsent(ViewPCLError, ValueError):
    pass


class EmptyOmega(ViewPCLError, ValueError):
    pass


class EmptyPool(ViewPCLError, LookupError):
    pass


class InvalidCount(ViewPCLError, ValueError):
    pass


class InvalidSpec(ViewPCLError, ValueError):
    pass


class BundleError(ViewPCLError):
    """Base for on-disk bundle problems."""


class DimensionMismatch(BundleError, ValueError):
    pass


class ManifestError(BundleError):
    pass


class MissingFile(BundleError):
    def __init__(self, path, view_id=None):
        where = f" (view {view_id})" if view_id is not None else ""
        super().__init__(f"missing file{where}: {path}")
        self.path = path
        self.view_id = view_id


class ValidationError(BundleError):
    pass


class ProviderFailure(ViewPCLError, RuntimeError):
    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"probability provider failed in round {round_index}: {cause}")
        self.round_index = round_index
        self.__cause__ = cause
