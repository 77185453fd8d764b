from enum import Enum, IntEnum
from typing import List


class SegmentTag(IntEnum):
    RAMP_IN = 0
    PERIODIC = 1
    RAMP_OUT = 2


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class MotionFamily(Enum):
    WALK_FORWARD = "walk forward"
    WAVE_RIGHT_ARM = "wave right arm"
    TURN_IN_PLACE = "turn in place"
    JUMP = "jump"
    RUN_FORWARD = "run forward"
    WAVE_LEFT_ARM = "wave left arm"

    @classmethod
    def from_name(cls, name: str) -> "MotionFamily":
        key = name.strip().lower().replace("_", " ").replace("-", " ")
        for family in cls:
            if family.value == key:
                return family
        raise KeyError(name)

    @property
    def moves_root(self) -> bool:
        return self in (MotionFamily.WALK_FORWARD, MotionFamily.RUN_FORWARD)


class SignalRepresentation(Enum):
    SIN = "sin"
    SINCOS = "sincos"

    @property
    def channels_per_phase(self) -> int:
        return 1 if self == SignalRepresentation.SIN else 2


class GenerationMode(Enum):
    REPETITION = "repetition"
    GENERATIVE = "generative"


class PoseCondition(Enum):
    """Conditioning pose used for the second segment of a transition."""
    END_POSE = "end-pose"
    RANDOM_POSE = "random-pose"
    ZERO_MASK = "zero-mask"


class RenoiseMode(Enum):
    POSTERIOR = "posterior"
    MARGINAL = "marginal"


class ExportFormat(Enum):
    CSV = "csv"
    FRAMES_PNG = "frames-png"
    STICK_MP4_SCRIPT = "stick-mp4-script"


class StudyKind(Enum):
    RECON_STUDY = "recon-study"
    TRANSITION_STUDY = "transition-study"
    GUIDANCE_SWEEP = "guidance-sweep"
    TIMING = "timing"


def enum_values(enum_cls) -> List[str]:
    return [member.value for member in enum_cls]
