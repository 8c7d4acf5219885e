"""Export of evaluation reports, spectrogram images and ABX listening pairs."""

import csv
import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import openpyxl  # noqa: E402
import pandas as pd  # noqa: E402
from openpyxl.styles import Alignment, Font, PatternFill  # noqa: E402
from openpyxl.utils import get_column_letter  # noqa: E402

from bandlift.audio import read_wav, write_wav  # noqa: E402
from bandlift.config import Config, get_config  # noqa: E402
from bandlift.dataset import degrade  # noqa: E402
from bandlift.dsp import eval_filter_spec  # noqa: E402
from bandlift.errors import ValidationError  # noqa: E402
from bandlift.evaluator import Resolver, load_references, magnitude_spectrogram  # noqa: E402
from bandlift.models import AbxAssignment, EvalReport, LsdConfig, Waveform  # noqa: E402

logger = logging.getLogger(__name__)

AVG_COLUMN = "AVG"
ABX_KEY_FILE = "key.json"
ABX_LISTING_FILE = "listing.csv"


def rate_label(rate: int) -> str:
    return f"{rate / 1000:g} kHz"


def report_table(reports: list[EvalReport]) -> pd.DataFrame:
    """
    One row per system, one column per input rate (ascending) plus AVG.

    Args:
        reports: Evaluation reports

    Returns:
        DataFrame indexed by system name
    """
    rates = sorted({row.rate for report in reports for row in report.rows})
    records = []
    for report in reports:
        by_rate = {row.rate: row.mean_lsd for row in report.rows}
        record: dict[str, Any] = {"System": report.model_identifier}
        for rate in rates:
            record[rate_label(rate)] = by_rate.get(rate, np.nan)
        record[AVG_COLUMN] = report.aggregate
        records.append(record)
    columns = ["System"] + [rate_label(r) for r in rates] + [AVG_COLUMN]
    return pd.DataFrame.from_records(records, columns=columns).set_index("System")


def format_table(reports: list[EvalReport], precision: int = 2) -> str:
    """Plain-text LSD table."""
    if not reports:
        return ""
    return report_table(reports).to_string(float_format=lambda v: f"{v:.{precision}f}")


class ExportManager:
    """Manages export of evaluation reports to various formats."""

    def __init__(self, export_dir: Optional[Path] = None, config: Optional[Config] = None):
        """
        Initialize export manager.

        Args:
            export_dir: Directory for export files (uses config if None)
            config: Configuration instance (uses global if None)
        """
        self.config = config or get_config()
        self.export_dir = Path(export_dir or self.config.exports_dir)
        self.export_dir.mkdir(parents=True, exist_ok=True)

    def _default_name(self, suffix: str) -> str:
        return f"bandlift_report_{datetime.now().strftime('%Y%m%d_%H%M%S')}.{suffix}"

    def export_to_csv(self, reports: list[EvalReport], filename: Optional[str] = None) -> Path:
        """
        Export the LSD table to CSV.

        Args:
            reports: Evaluation reports, one per system
            filename: Output filename (generated if not provided)

        Returns:
            Path to exported file
        """
        filepath = self.export_dir / (filename or self._default_name("csv"))
        table = report_table(reports)
        table.insert(0, "Parameters", [r.parameter_count or "" for r in reports])
        table.to_csv(filepath, float_format="%.4f")
        logger.info(f"Exported CSV to {filepath}")
        return filepath

    def export_to_json(self, reports: list[EvalReport], filename: Optional[str] = None) -> Path:
        """
        Export full reports (rows, LSD settings and digest) to JSON.

        Args:
            reports: Evaluation reports
            filename: Output filename (generated if not provided)

        Returns:
            Path to exported file
        """
        filepath = self.export_dir / (filename or self._default_name("json"))
        export_data = {
            "metadata": {
                "generated_at": datetime.now().isoformat(),
                "systems": [r.model_identifier for r in reports],
            },
            "reports": [
                {**r.model_dump(mode="json"), "aggregate": r.aggregate} for r in reports
            ],
        }
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(export_data, f, indent=2, ensure_ascii=False)
        logger.info(f"Exported JSON to {filepath}")
        return filepath

    def export_to_excel(
        self, reports: list[EvalReport], filename: Optional[str] = None
    ) -> Path:
        """
        Export the LSD table and evaluation settings to an Excel workbook.

        Args:
            reports: Evaluation reports
            filename: Output filename (generated if not provided)

        Returns:
            Path to exported file
        """
        filepath = self.export_dir / (filename or self._default_name("xlsx"))
        wb = openpyxl.Workbook()
        if wb.active is not None:
            wb.remove(wb.active)
        self._create_summary_sheet(wb, reports)
        self._create_metadata_sheet(wb, reports)
        wb.save(filepath)
        logger.info(f"Exported Excel to {filepath}")
        return filepath

    def _create_summary_sheet(self, wb: Any, reports: list[EvalReport]) -> None:
        """Create the LSD table sheet."""
        ws = wb.create_sheet("LSD")
        table = report_table(reports)
        headers = ["System", "Parameters", *table.columns]

        header_font = Font(bold=True, color="FFFFFF")
        header_fill = PatternFill(start_color="0066CC", end_color="0066CC", fill_type="solid")
        for col, header in enumerate(headers, 1):
            cell = ws.cell(row=1, column=col, value=header)
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = Alignment(horizontal="center")

        for row, report in enumerate(reports, 2):
            ws.cell(row=row, column=1, value=report.model_identifier)
            ws.cell(row=row, column=2, value=report.parameter_count)
            for col, value in enumerate(table.loc[report.model_identifier], 3):
                ws.cell(row=row, column=col, value=None if pd.isna(value) else float(value))

        for col in range(1, len(headers) + 1):
            ws.column_dimensions[get_column_letter(col)].width = 15

    def _create_metadata_sheet(self, wb: Any, reports: list[EvalReport]) -> None:
        """Create the evaluation settings sheet."""
        ws = wb.create_sheet("Evaluation Settings")
        lsd_config = reports[0].lsd_config if reports else LsdConfig()
        metadata = [
            ("STFT size", lsd_config.n_fft),
            ("Hop", lsd_config.hop),
            ("Window", lsd_config.window),
            ("Magnitude floor", lsd_config.floor),
            ("LSD config digest", lsd_config.digest()),
            ("Degradation filter", reports[0].filter_spec if reports else ""),
            ("Export Generated", datetime.now().strftime("%Y-%m-%d %H:%M:%S")),
        ]
        for row, (label, value) in enumerate(metadata, 1):
            ws.cell(row=row, column=1, value=label).font = Font(bold=True)
            ws.cell(row=row, column=2, value=str(value))
        ws.column_dimensions["A"].width = 25
        ws.column_dimensions["B"].width = 40

    def export_report(
        self, reports: list[EvalReport], path: Path, fmt: Optional[str] = None
    ) -> list[Path]:
        """
        Write the machine-readable report plus the formatted text table.

        Args:
            reports: Evaluation reports
            path: Report path; its suffix picks the format unless `fmt` is given
            fmt: "csv", "json" or "xlsx"

        Returns:
            Paths written (report, then the .txt table)
        """
        path = Path(path)
        fmt = fmt or path.suffix.lstrip(".") or self.config.export_format_default
        if fmt not in ("csv", "json", "xlsx"):
            fmt = "csv"
        target = ExportManager(path.parent or self.export_dir, self.config)
        name = path.with_suffix(f".{fmt}").name
        exporters = {
            "csv": target.export_to_csv,
            "json": target.export_to_json,
            "xlsx": target.export_to_excel,
        }
        written = exporters[fmt](reports, name)
        table_path = written.with_suffix(".txt")
        table_path.write_text(format_table(reports) + "\n", encoding="utf-8")
        return [written, table_path]


def spectrogram_db_matrix(w: Waveform, cfg: Optional[LsdConfig] = None) -> np.ndarray:
    """
    Log-magnitude spectrogram in dB laid out as bins x frames (low frequencies first).

    Args:
        w: Waveform
        cfg: STFT settings and magnitude floor

    Returns:
        float64 array (n_fft/2+1 x T)
    """
    cfg = cfg or LsdConfig()
    magnitude = magnitude_spectrogram(w, cfg)
    return np.asarray(20.0 * np.log10(np.maximum(magnitude, cfg.floor)).T)


def emit_spectrogram_plot(wav_path: Path, image_path: Path) -> Path:
    """
    Render a log-magnitude spectrogram image with a dB color scale.

    Args:
        wav_path: Input audio
        image_path: Output PNG

    Returns:
        Path written
    """
    wav = read_wav(wav_path)
    matrix = spectrogram_db_matrix(wav)

    fig, ax = plt.subplots(figsize=(10, 4))
    image = ax.imshow(
        matrix,
        origin="lower",
        aspect="auto",
        cmap="magma",
        extent=(0.0, wav.duration, 0.0, wav.sample_rate / 2000),
    )
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Frequency (kHz)")
    ax.set_title(Path(wav_path).name)
    fig.colorbar(image, ax=ax, label="dB")
    fig.tight_layout()

    image_path = Path(image_path)
    image_path.parent.mkdir(parents=True, exist_ok=True)
    # no software/date metadata, so identical inputs give identical bytes
    fig.savefig(image_path, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    logger.info(f"Wrote spectrogram of {wav_path} to {image_path}")
    return image_path


def _seal(payload: dict[str, Any]) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def export_abx_pairs(
    model_a: Resolver,
    model_b: Resolver,
    manifest: Path,
    rate: int,
    out_dir: Path,
    n_pairs: int,
    seed: int,
) -> Path:
    """
    Export randomized A/B stimulus pairs for a preference test.

    Each pair directory holds a.wav, b.wav and the shared degraded input.wav. The
    listing names pairs only; which model is A or B is stored in a sealed key file.

    Args:
        model_a: First system
        model_b: Second system
        manifest: 48 kHz references
        rate: Degraded input rate
        out_dir: Output directory
        n_pairs: Number of pairs, at most the number of references
        seed: Seed for reference selection and A/B assignment

    Returns:
        Path of the listing file
    """
    if n_pairs < 0:
        raise ValidationError("n_pairs must be non-negative")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    references = load_references(manifest) if n_pairs > 0 else []
    if n_pairs > len(references) and n_pairs > 0:
        raise ValidationError(
            f"Requested {n_pairs} pairs but the manifest has {len(references)} references"
        )

    rng = np.random.default_rng(seed)
    chosen = rng.permutation(len(references))[:n_pairs].tolist() if references else []
    systems = {"model_a": model_a, "model_b": model_b}
    assignments: list[AbxAssignment] = []
    spec = eval_filter_spec(rate)

    for k, index in enumerate(chosen):
        source, hi = references[index]
        pair_id = f"pair_{k:03d}"
        swap = bool(rng.random() < 0.5)
        assignment = AbxAssignment(
            pair_id=pair_id,
            source=str(source),
            a="model_b" if swap else "model_a",
            b="model_a" if swap else "model_b",
        )
        low = degrade(hi, rate, spec)
        pair_dir = out_dir / pair_id
        write_wav(pair_dir / "input.wav", low)
        write_wav(pair_dir / "a.wav", systems[assignment.a].resolve(low))
        write_wav(pair_dir / "b.wav", systems[assignment.b].resolve(low))
        assignments.append(assignment)

    listing = out_dir / ABX_LISTING_FILE
    with open(listing, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["pair_id", "directory", "input_rate"])
        writer.writeheader()
        for assignment in assignments:
            writer.writerow(
                {
                    "pair_id": assignment.pair_id,
                    "directory": assignment.pair_id,
                    "input_rate": rate,
                }
            )

    payload = {
        "models": {"model_a": model_a.identifier, "model_b": model_b.identifier},
        "rate": rate,
        "seed": seed,
        "assignments": [a.model_dump() for a in assignments],
    }
    key = {**payload, "seal": _seal(payload)}
    (out_dir / ABX_KEY_FILE).write_text(json.dumps(key, indent=2), encoding="utf-8")
    logger.info(f"Exported {len(assignments)} ABX pairs to {out_dir}")
    return listing


def decode_abx_key(out_dir: Path) -> dict[str, dict[str, str]]:
    """
    Verify the key file's seal and map every pair to the systems behind A and B.

    Returns:
        {pair_id: {"a": system identifier, "b": system identifier}}
    """
    key_path = Path(out_dir) / ABX_KEY_FILE
    try:
        key = json.loads(key_path.read_text(encoding="utf-8"))
        seal = key.pop("seal")
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise ValidationError(f"Cannot read ABX key {key_path}: {e}") from e
    if seal != _seal(key):
        raise ValidationError(f"ABX key {key_path} has been modified (seal mismatch)")

    models = key["models"]
    decoded = {}
    for raw in key["assignments"]:
        assignment = AbxAssignment.model_validate(raw)
        decoded[assignment.pair_id] = {
            "a": models[assignment.a],
            "b": models[assignment.b],
        }
    return decoded
