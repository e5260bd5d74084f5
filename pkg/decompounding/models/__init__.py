"""Pydantic models and schemas."""

from .schemas import (
    ComponentKind,
    TuneOn,
    ExportFormat,
    MixtureComponent,
    JumpDensityModel,
    ObservationRecord,
    NonzeroIncrements,
    Interval,
    WaveletBasis,
    BinnedSample,
    WaveletCoefficients,
    EstimationDiagnostics,
    DensityEstimate,
    CompoundingWeights,
    InverseCoefficients,
    IntensityEstimate,
    RateExponent,
    GridFunction,
    CompoundedGrid,
    ExperimentConfig,
    ReplicateRecord,
    EstimatorSummary,
    PmEstimate,
    PairedComparison,
    ExperimentReport,
)
