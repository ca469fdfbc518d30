"""speechforge: speech-annotation corpus tooling.

Safe chunking of long recordings, a two-stage annotation pipeline over
pluggable backends, expert cross-validation filters, tagged-transcription
scoring, benchmark packaging, a human-review workflow, an evaluation
harness, and curriculum mixing for training data.
"""

from .schema import (
    AnnotationRecord,
    Dimension,
    Language,
    ManifestEntry,
    Provenance,
    TagVocabulary,
    DEFAULT_TAG_VOCABULARY,
    ValidationErrorList,
    emit_record,
    read_manifest,
    validate_record,
    write_manifest,
)
from .metrics import (
    MalformedTagError,
    PataScore,
    UniformToken,
    compute_err,
    compute_pata,
    edit_distance,
    mean_pata,
    score_tags,
    tokenize,
)
from .chunking import (
    Chunk,
    ChunkPlan,
    DetectorSource,
    SilenceRegion,
    TimedUtterance,
    apply_cuts,
    complement_silences,
    merge_speech_intervals,
    plan_cuts,
)
from .backends import (
    BackendUnavailableError,
    UnparseableResponseError,
    call_with_retries,
    content_hash,
)
from .annotation import (
    ChunkWork,
    Stage1Result,
    PipelineResult,
    TimestampOutOfBoundsError,
    annotate_stage1,
    annotate_stage2,
    ingest_presegmented,
    run_ingest,
    run_pipeline,
    run_stage1,
    run_stage2,
)
from .crossval import (
    CascadeConfig,
    CascadeStats,
    EmptyReferenceError,
    FilterVerdict,
    run_cascade,
)
from .benchmark import (
    BenchPackage,
    McqItem,
    Option,
    OptionClass,
    admit_candidates,
    build_package,
    generate_mcq,
    inject_controls,
    load_package,
    stratified_sample,
    validate_item,
)
from .review import (
    ReviewDecision,
    AdjudicationDecision,
    ReviewItem,
    ReviewQueue,
    ReviewState,
    Verdict,
    VersionConflictError,
)
from .evaluation import (
    EvalReport,
    EvalRun,
    ModelAnswer,
    Protocol,
    evaluate_package,
    parse_choice,
    run_mcq_eval,
    run_tpt_eval,
    score_accuracy,
)
from .mixing import (
    InstanceKind,
    TrainingInstance,
    build_stage,
    formulate,
    largest_remainder,
    mix_all,
)

__version__ = "0.1.0"
