"""Exception types raised across the pipeline."""


class FmriscalesError(Exception):
    """Base class for all errors raised by this package."""


# --- cohort ingestion ---------------------------------------------------

class MissingNetworkFile(FmriscalesError):
    pass


class RoiCountMismatch(FmriscalesError):
    def __init__(self, network, expected, found):
        self.network = network
        self.expected = expected
        self.found = found
        super().__init__(
            f"network '{network}': expected {expected} ROI columns, found {found}"
        )


class NonFiniteSample(FmriscalesError):
    def __init__(self, subject_id, network, roi_label, timepoint):
        self.subject_id = subject_id
        self.network = network
        self.roi_label = roi_label
        self.timepoint = timepoint
        super().__init__(
            f"non-finite sample at subject={subject_id} network={network} "
            f"roi={roi_label} timepoint={timepoint}"
        )


class LengthMismatch(FmriscalesError):
    pass


class InvalidLabel(FmriscalesError):
    pass


# --- regional homogeneity ------------------------------------------------

class DegenerateInput(FmriscalesError):
    pass


class NoDefinedReho(FmriscalesError):
    pass


# --- embedding -----------------------------------------------------------

class SeriesTooShort(FmriscalesError):
    pass


class InvalidParams(FmriscalesError):
    pass


class DegenerateSeries(FmriscalesError):
    pass


# --- recurrence ----------------------------------------------------------

class InvalidRate(FmriscalesError):
    pass


# --- connectivity ---------------------------------------------------------

class SingularCovariance(FmriscalesError):
    pass


class NonPositiveDiagonal(FmriscalesError):
    pass


class ConvergenceFailure(FmriscalesError):
    pass


# --- classification --------------------------------------------------------

class EmptyData(FmriscalesError):
    pass


class TooFewSamples(FmriscalesError):
    pass


# --- synthetic generators ----------------------------------------------------

class InvalidSpec(FmriscalesError):
    pass


class NotPositiveDefinite(FmriscalesError):
    pass


# --- pipeline / reporting ------------------------------------------------

class IncompleteRun(FmriscalesError):
    pass
