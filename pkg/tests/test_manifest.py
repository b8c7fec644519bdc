import random

import numpy as np
import pytest

from dlarch.data.manifest import (
    HEADER,
    Dataset,
    DuplicatePathError,
    EmptyClassError,
    ManifestHeaderError,
    ManifestRow,
    MissingImageError,
    UnknownTokenError,
    load_manifest,
    write_manifest,
)
from dlarch.data.ppm import write_ppm

# Per-class sample sizes of the 35-class architect corpus; totals 19,568.
TABLE2 = {
    "Alvar Aalto": 460, "Alvaro Siza": 1289, "Bernard Tschumi": 288, "Coop Himmelblau": 390,
    "Le Corbusier": 527, "Daniel Libeskind": 406, "Dominique Perrault": 234, "E. Souto de Moura": 559,
    "Enric Miralles": 518, "Frank Gehry": 669, "Frank Lloyd Wright": 1177, "Fumihiko Maki": 457,
    "I.M. Pei": 419, "Jean Nouvel": 358, "Louis Kahn": 1442, "Mies van der Rohe": 881,
    "MVRDV": 253, "Norman Foster": 256, "Oscar Niemeyer": 437, "Peter Eisenman": 331,
    "Rafael Moneo": 278, "Rem Koolhaas": 373, "Renzo Piano": 542, "Richard Meier": 464,
    "Richard Rogers": 406, "SANNA": 393, "Shigeru Ban": 216, "Steven Holl": 498,
    "Tadao Ando": 730, "Kenzo Tange": 454, "Thom Mayne": 723, "Toyo Ito": 672,
    "Yoshio Taniguchi": 528, "Zaha Hadid": 635, "Normal house": 1305,
}


def make_corpus(tmp_path, labels):
    rows = []
    for i, label in enumerate(labels):
        rel = f"img{i}.ppm"
        write_ppm(tmp_path / rel, np.full((2, 2, 3), i, dtype=np.uint8))
        rows.append(ManifestRow(rel, label, "train" if i % 2 == 0 else "test", "indoor", "self"))
    write_manifest(tmp_path / "manifest.csv", rows)
    return rows


def test_class_indices_by_name(tmp_path):
    make_corpus(tmp_path, ["b", "a"])
    ds = load_manifest(tmp_path / "manifest.csv")
    assert ds.class_index == {"a": 0, "b": 1}
    np.testing.assert_array_equal(ds.labels(ds.rows), [1, 0])


def test_row_order_independent(tmp_path):
    rows = make_corpus(tmp_path, ["z", "y", "x", "y", "z", "z"])
    ds1 = load_manifest(tmp_path / "manifest.csv")
    shuffled = rows[:]
    random.Random(0).shuffle(shuffled)
    write_manifest(tmp_path / "manifest.csv", shuffled)
    ds2 = load_manifest(tmp_path / "manifest.csv")
    assert ds1.class_index == ds2.class_index
    assert ds1.class_counts() == ds2.class_counts()


def test_missing_file_names_path(tmp_path):
    write_manifest(tmp_path / "manifest.csv", [ManifestRow("nope.ppm", "a", "train", "indoor", "self")])
    with pytest.raises(MissingImageError, match="nope.ppm"):
        load_manifest(tmp_path / "manifest.csv")


def test_unknown_tokens(tmp_path):
    make_corpus(tmp_path, ["a"])
    for bad in (
        ManifestRow("img0.ppm", "a", "val", "indoor", "self"),
        ManifestRow("img0.ppm", "a", "train", "aerial", "self"),
        ManifestRow("img0.ppm", "a", "train", "indoor", "scraped"),
    ):
        with pytest.raises(UnknownTokenError):
            Dataset([bad], root=tmp_path)


def test_duplicate_path(tmp_path):
    make_corpus(tmp_path, ["a"])
    row = ManifestRow("img0.ppm", "a", "train")
    with pytest.raises(DuplicatePathError):
        Dataset([row, row], root=tmp_path)


def test_bad_header(tmp_path):
    (tmp_path / "m.csv").write_text("file,label\nx,a\n")
    with pytest.raises(ManifestHeaderError):
        load_manifest(tmp_path / "m.csv")


def test_empty_class_in_split(tmp_path):
    make_corpus(tmp_path, ["a", "b", "a"])
    ds = load_manifest(tmp_path / "manifest.csv")
    with pytest.raises(EmptyClassError):
        ds.require_all_classes("test")


def test_load_caches_images(tmp_path):
    make_corpus(tmp_path, ["a"])
    ds = load_manifest(tmp_path / "manifest.csv")
    assert ds.load(ds.rows[0]) is ds.load(ds.rows[0])


def test_table2_structural(tmp_path):
    assert len(TABLE2) == 35
    rows = [
        ManifestRow(f"{name}/{i:05d}.jpg", name, "train" if i % 5 else "test", "unknown", "web")
        for name, n in TABLE2.items()
        for i in range(n)
    ]
    path = tmp_path / "manifest.csv"
    write_manifest(path, rows)
    assert path.read_text().splitlines()[0] == ",".join(HEADER)
    ds = load_manifest(path, check_files=False)
    assert len(ds) == 19568
    assert ds.num_classes == 35
    assert ds.class_counts() == {k: TABLE2[k] for k in sorted(TABLE2)}
