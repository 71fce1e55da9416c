from .triggers import TRIGGER_SHAPES, TriggerSpec, make_trigger, stamp, trigger_from_dict
from .synthetic import DatasetBundle, generate_synthetic_dataset, load_dataset, save_dataset
from .poison import PoisonConfig, attack_success_rate, poison_dataset

__all__ = [
    "TRIGGER_SHAPES", "TriggerSpec", "make_trigger", "stamp", "trigger_from_dict",
    "DatasetBundle", "generate_synthetic_dataset", "load_dataset", "save_dataset",
    "PoisonConfig", "attack_success_rate", "poison_dataset",
]
