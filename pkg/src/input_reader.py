import json
import logging
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from src.bag import Bag, MILDataset

logger = logging.getLogger(__name__)

BAG_ID_COLUMN = "bag_id"
LABEL_COLUMN = "label"
FEATURE_PREFIX = "f"


class DatasetError(ValueError):
    """Raised when a dataset file cannot be parsed into a valid MILDataset"""


class DatasetFormat(Enum):
    JSONL = "jsonl"
    CSV = "csv"


def infer_format(path: Path) -> DatasetFormat:
    """
    Infers the dataset format from the file extension (.jsonl or .csv)

    :raise:
        DatasetError: If the extension is not recognised
    """
    suffix = path.suffix.lower().lstrip(".")
    try:
        return DatasetFormat(suffix)
    except ValueError:
        raise DatasetError(f"Cannot infer dataset format from '{path.name}', expected .jsonl or .csv")


def _parse_label(value, where: str) -> int:
    if isinstance(value, bool) or value not in (-1, 1):
        raise DatasetError(f"{where}: label must be -1 or 1, got {value!r}")
    return int(value)


def _build_dataset(bags: list[Bag], path: Path) -> MILDataset:
    if len(bags) == 0:
        raise DatasetError("no bags")

    dimension = bags[0].dimension
    seen_ids = set()
    for bag in bags:
        if bag.dimension != dimension:
            raise DatasetError(f"Bag '{bag.bag_id}' has dimension {bag.dimension}, expected {dimension}")
        if bag.bag_id in seen_ids:
            raise DatasetError(f"Duplicated bag id '{bag.bag_id}'")
        seen_ids.add(bag.bag_id)

    dataset = MILDataset.from_bags(bags)
    logger.info("Read %d bags (d=%d, R=%d) from %s", len(dataset), dataset.dimension, dataset.max_bag_size, path)
    return dataset


def _undecodable_line(path: Path) -> int:
    """Number of the first line of a file that is not valid UTF-8"""
    for line_number, raw_line in enumerate(path.read_bytes().split(b"\n"), start=1):
        try:
            raw_line.decode("utf-8")
        except UnicodeDecodeError:
            return line_number
    return 1


def _read_jsonl(path: Path) -> MILDataset:
    try:
        with open(path, encoding="utf-8") as file:
            lines = file.readlines()
    except UnicodeDecodeError:
        raise DatasetError(f"{path.name}, line {_undecodable_line(path)}: not valid UTF-8")

    bags = []
    for line_number, line in enumerate(lines, start=1):
        if line.strip() == "":
            continue
        where = f"{path.name}, line {line_number}"
        try:
            record = json.loads(line)
            bag_id = record["bag_id"]
            label = record["label"]
            instances = record["instances"]
        except json.JSONDecodeError as e:
            raise DatasetError(f"{where}: malformed record ({e.msg})")
        except (KeyError, TypeError) as e:
            raise DatasetError(f"{where}: malformed record, missing field {e}")

        if not isinstance(bag_id, str):
            raise DatasetError(f"{where}: bag_id must be a string")
        if (not isinstance(instances, list) or len(instances) == 0
                or not all(isinstance(instance, list) for instance in instances)
                or len({len(instance) for instance in instances}) != 1):
            raise DatasetError(f"{where}: instances of bag '{bag_id}' must be a non-empty rectangular array")
        label = _parse_label(label, where)
        try:
            bags.append(Bag(bag_id=bag_id, instances=np.array(instances, dtype=float), label=label))
        except (TypeError, ValueError) as e:
            raise DatasetError(f"{where}: invalid bag '{bag_id}' ({e})")
    return _build_dataset(bags, path)


def _read_csv(path: Path) -> MILDataset:
    try:
        df = pd.read_csv(path, dtype={BAG_ID_COLUMN: str}, float_precision="round_trip", encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DatasetError("no bags")
    except pd.errors.ParserError as e:
        raise DatasetError(f"{path.name}: malformed record ({e})")
    except UnicodeDecodeError:
        raise DatasetError(f"{path.name}, line {_undecodable_line(path)}: not valid UTF-8")

    feature_columns = [column for column in df.columns if column not in (BAG_ID_COLUMN, LABEL_COLUMN)]
    expected_features = [f"{FEATURE_PREFIX}{j}" for j in range(len(feature_columns))]
    if BAG_ID_COLUMN not in df.columns or LABEL_COLUMN not in df.columns or feature_columns != expected_features:
        raise DatasetError(f"{path.name}: columns must be bag_id,label,f0..f(d-1), got {list(df.columns)}")
    if len(df) == 0:
        raise DatasetError("no bags")

    features = df[feature_columns].apply(pd.to_numeric, errors="coerce")
    labels = pd.to_numeric(df[LABEL_COLUMN], errors="coerce")
    invalid_rows = features.isna().any(axis=1) | df[BAG_ID_COLUMN].isna() | labels.isna()
    if invalid_rows.any():
        # header is line 1, first record is line 2
        line_number = int(np.flatnonzero(invalid_rows.to_numpy())[0]) + 2
        raise DatasetError(f"{path.name}, line {line_number}: malformed record")

    # A bag is a run of consecutive rows sharing a bag_id
    bag_ids = df[BAG_ID_COLUMN]
    run_starts = np.flatnonzero(np.concatenate(([True], bag_ids.to_numpy()[1:] != bag_ids.to_numpy()[:-1])))
    run_ends = np.append(run_starts[1:], len(df))

    bags = []
    for start, end in zip(run_starts, run_ends):
        bag_id = bag_ids.iloc[start]
        bag_labels = labels.iloc[start:end].unique()
        if len(bag_labels) != 1:
            raise DatasetError(f"{path.name}, line {start + 2}: bag '{bag_id}' has inconsistent labels "
                               f"{bag_labels.tolist()}")
        label = _parse_label(float(bag_labels[0]), f"{path.name}, line {start + 2}")
        bags.append(Bag(bag_id=bag_id, instances=features.iloc[start:end].to_numpy(dtype=float), label=label))
    return _build_dataset(bags, path)


def load_dataset(path: Path, dataset_format: DatasetFormat | None = None) -> MILDataset:
    """
    Reads a dataset file, keeping the bag order of the file.

    JSONL: one object per line {"bag_id": str, "label": -1 | 1, "instances": [[...], ...]}.
    CSV: columns bag_id,label,f0..f(d-1), one instance per row, a bag being consecutive rows sharing a bag_id.

    :param path: Path of the dataset file
    :param dataset_format: Format of the file, inferred from the extension if None

    :raise:
        FileNotFoundError: If the file does not exist
        DatasetError: If a record is malformed or not valid UTF-8 (the message names the line), dimensions are
            inconsistent (the message names the bag), a label is not in {-1, +1}, or the file holds no bag ("no bags")

    :return: The dataset. Neither format stores R, so R is the largest bag size found: a dataset whose bags are all
        smaller than its R reloads with a smaller R
    """
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    if dataset_format is None:
        dataset_format = infer_format(path)
    if dataset_format is DatasetFormat.JSONL:
        return _read_jsonl(path)
    return _read_csv(path)


def format_dataset(dataset: MILDataset, dataset_format: DatasetFormat) -> str:
    """
    Renders a dataset in one of the formats read by load_dataset. Floats are written in their shortest round-trip
    representation, so that loading the text gives back the same bags
    (R aside, see load_dataset).
    """
    if dataset_format is DatasetFormat.JSONL:
        return "".join(json.dumps({"bag_id": bag.bag_id, "label": bag.label, "instances": bag.instances.tolist()})
                       + "\n" for bag in dataset.bags)

    rows = [[bag.bag_id, bag.label, *instance] for bag in dataset.bags for instance in bag.instances.tolist()]
    columns = [BAG_ID_COLUMN, LABEL_COLUMN] + [f"{FEATURE_PREFIX}{j}" for j in range(dataset.dimension)]
    return pd.DataFrame(rows, columns=columns).to_csv(index=False, lineterminator="\n")


def save_dataset(dataset: MILDataset, path: Path, dataset_format: DatasetFormat | None = None):
    """Writes a dataset file, the format being inferred from the extension if not given"""
    if dataset_format is None:
        dataset_format = infer_format(path)
    with open(path, "w", encoding="utf-8", newline="\n") as file:
        file.write(format_dataset(dataset, dataset_format))


def read_config_file(path: Path) -> dict:
    """
    Reads a JSON run configuration file (an object whose keys are run settings)

    :raise:
        FileNotFoundError: If the file does not exist
        ValueError: If the file is not a JSON object
    """
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValueError(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise ValueError(f"Config file {path} must contain a JSON object")
    return data
