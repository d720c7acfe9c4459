"""
Shared Constants for GroundKit
Contains modality/task enums, special tokens, CT windows and configuration defaults
"""

from enum import Enum, IntEnum
from typing import Dict, Tuple


# ==================== IMAGING MODALITIES ====================
class Modality(str, Enum):
    """Biomedical imaging modalities"""
    CT = "CT"
    MRI = "MRI"
    XRAY = "XRay"
    PATHOLOGY = "Pathology"
    ULTRASOUND = "Ultrasound"
    FUNDUS = "Fundus"
    DERMOSCOPY = "Dermoscopy"
    ENDOSCOPE = "Endoscope"
    OCT = "OCT"
    PET = "PET"


# Modalities that come as 3D volumes and are sliced along the axial axis
VOLUMETRIC_MODALITIES = (Modality.CT, Modality.MRI)


# ==================== TASKS ====================
class TaskKind(str, Enum):
    """The five grounded interpretation tasks"""
    SEGMENTATION = "Segmentation"
    DISEASE_RECOGNITION = "DiseaseRecognition"
    ROI_CLASSIFICATION = "RoiClassification"
    REGION_REPORT = "RegionReport"
    GROUNDED_REPORT = "GroundedReport"


# Tasks whose answers carry [SEG] and whose samples carry a target mask
MASK_TASKS = (
    TaskKind.SEGMENTATION,
    TaskKind.DISEASE_RECOGNITION,
    TaskKind.GROUNDED_REPORT,
)

# Tasks supervised by text only (segmentation loss discarded)
TEXT_ONLY_TASKS = (
    TaskKind.ROI_CLASSIFICATION,
    TaskKind.REGION_REPORT,
)


def task_requires_mask(task: TaskKind) -> bool:
    """True if samples of this task must carry a target mask"""
    return TaskKind(task) in MASK_TASKS


class MaskKind(str, Enum):
    """Region annotation kinds"""
    MASK = "Mask"
    BBOX = "BBox"


class BodyRegion(str, Enum):
    """CT body regions with a known window"""
    CHEST = "Chest"
    ABDOMEN = "Abdomen"


# ==================== CT WINDOWS (HU) ====================
CT_WINDOWS: Dict[BodyRegion, Tuple[float, float]] = {
    BodyRegion.CHEST: (-1000.0, 500.0),
    BodyRegion.ABDOMEN: (-175.0, 250.0),
}


# ==================== VOCABULARY ====================
class SpecialToken(IntEnum):
    """Reserved vocabulary slots"""
    PAD = 0
    BOS = 1
    EOS = 2
    SEG = 3
    UNK = 4


SEG_TOKEN = "[SEG]"
NO_FINDINGS = "No findings"

SPECIAL_TOKEN_STRINGS: Dict[int, str] = {
    SpecialToken.PAD: "<pad>",
    SpecialToken.BOS: "<bos>",
    SpecialToken.EOS: "<eos>",
    SpecialToken.SEG: SEG_TOKEN,
    SpecialToken.UNK: "<unk>",
}


# ==================== SPLITS ====================
class Split(str, Enum):
    """Dataset split names"""
    TRAIN = "train"
    TEST = "test"


# ==================== CONFIGURATION DEFAULTS ====================
class Config:
    """Default configuration values"""

    # Reproducibility
    SEED = 42

    # Data
    TEST_FRACTION = 0.2
    IMAGE_SIZE = (64, 64)          # toy default; (1024, 1024) for full-size runs
    BOX_THICKNESS = 2

    # Model
    PATCH_SIZE = 8
    D_MODEL = 64
    N_HEADS = 4
    MAX_ANSWER_LEN = 32
    MASK_THRESHOLD = 0.5
    PROMPT_QUERIES = 4
    ADAPTER_RANK = 16

    # Losses
    LAMBDA_BCE = 2.0
    LAMBDA_DICE = 0.5
    DICE_EPS = 1.0
    BCE_CLAMP = 1e-7
    ZSCORE_EPS = 1e-8

    # Training (toy defaults; full-scale values are batch 32, lr 4e-5)
    BATCH_SIZE = 8
    LEARNING_RATE = 1e-3
    WEIGHT_DECAY = 0.01
    EPOCHS = 10
    WARMUP_FRACTION = 0.03

    # Evaluation
    N_TRIALS = 5
    ROUGE_BETA = 1.2

    # Gradient checking
    GRADCHECK_H = 1e-3
    GRADCHECK_COORDS = 64
