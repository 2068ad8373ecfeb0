"""featex: CNN feature-extractor trainer with a 32-d bottleneck export."""

from .config import FeatureTrainingConfig
from .data import LabeledImage, prepare_image, scan_image_folder
from .extract import export, extract, write_feature_file, write_sidecar
from .model import BottleneckClassifier, load_checkpoint, save_checkpoint
from .toyshapes import CLASSES, generate_toy_dataset
from .train import TrainResult, train

__version__ = "0.1.0"
