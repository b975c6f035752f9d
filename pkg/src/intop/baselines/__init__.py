from .genetic import GAConfig, ga_tune
from .neural import CNNClassifier, CNNConfig, FFNNClassifier, FFNNConfig, fit_cnn, fit_ffnn
from .svm import LinearSVM, fit_svm
from .tree import DecisionTree, best_split, fit_tree

__all__ = [
    "CNNClassifier", "CNNConfig", "DecisionTree", "FFNNClassifier", "FFNNConfig", "GAConfig",
    "LinearSVM", "best_split", "fit_cnn", "fit_ffnn", "fit_svm", "fit_tree", "ga_tune",
]
