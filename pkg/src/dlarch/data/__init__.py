from .manifest import Dataset, ManifestRow, load_manifest, write_manifest
from .ppm import decode_ppm, encode_pgm, encode_ppm, read_image, write_ppm
from .synth import SynthSpec, generate_synthetic, render_sample
from .transforms import augment, preprocess

__all__ = [
    "Dataset",
    "ManifestRow",
    "SynthSpec",
    "augment",
    "decode_ppm",
    "encode_pgm",
    "encode_ppm",
    "generate_synthetic",
    "load_manifest",
    "preprocess",
    "read_image",
    "render_sample",
    "write_manifest",
    "write_ppm",
]
