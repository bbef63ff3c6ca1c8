import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.aledg.cases.registry import CASE_DEFAULTS
from src.aledg.cases.vortex import CONVERGENCE_RESOLUTIONS
from src.aledg.services.convergence_service import convergence_table
from src.aledg.services.logger_service import get_logger
from src.aledg.services.results_db_service import ResultsDBService
from src.aledg.utils.config import load_config

logger = get_logger("src.aledg")

DEFAULT_RESOLUTIONS = ";".join(str(n) for n in CONVERGENCE_RESOLUTIONS)


def parse_resolutions(value: str) -> List[Tuple[int, ...]]:
    """Parse ``"43;57"`` or ``"10,10;20,20"`` into mesh resolutions.

    A single number stands for a square ``(n, n)`` grid.

    Raises:
        ValueError: On an empty list or a non-integer entry.
    """
    out: List[Tuple[int, ...]] = []
    for item in value.split(";"):
        numbers = tuple(int(v) for v in item.replace("x", ",").split(",") if v)
        if not numbers:
            continue
        out.append(numbers * 2 if len(numbers) == 1 else numbers)
    if not out:
        raise ValueError("No mesh resolutions given")
    return out


def handler(argv: Optional[Sequence[str]] = None) -> Dict[str, Any]:
    """Run a convergence study and write it as text, CSV and DB rows.

    Args:
        argv (Optional[Sequence[str]]): Command-line arguments; everything
            except ``--resolutions`` is read as a simulation flag.

    Returns:
        Dict[str, Any]: Response with ``statusCode`` and JSON ``body``.
    """
    try:
        parser = argparse.ArgumentParser(add_help=False)
        parser.add_argument("--resolutions")
        known, rest = parser.parse_known_args(list(argv or []))
        config = load_config(rest, CASE_DEFAULTS)
        resolutions = (
            known.resolutions
            or config.extra.get("resolutions")
            or DEFAULT_RESOLUTIONS
        )
        table = convergence_table(config, parse_resolutions(resolutions))

        text = table.to_text()
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / f"{table.label}.txt").write_text(text + "\n")
        csv_path = table.to_csv(out_dir / f"{table.label}.csv")
        logger.info(f"Convergence table {table.label}:\n{text}")

        if config.persist:
            db_service = ResultsDBService(config.results_db_url)
            db_service.create_schema()
            db_service.add_convergence_rows(
                table.label, table.order, table.as_records()
            )

        body = {
            "label": table.label,
            "csv": str(csv_path),
            "rows": table.as_records(),
        }
        return {"statusCode": 200, "body": json.dumps(body)}

    except ValueError as e:
        logger.exception(f"Invalid convergence input: {e}")
        return {"statusCode": 400, "body": json.dumps({"error": str(e)})}
    except Exception as e:
        logger.exception(f"Convergence study failed: {e}")
        return {"statusCode": 500, "body": json.dumps({"error": str(e)})}


def main(argv: Optional[Sequence[str]] = None) -> int:
    response = handler(sys.argv[1:] if argv is None else argv)
    print(response["body"])
    return 0 if response["statusCode"] == 200 else 1


if __name__ == "__main__":
    sys.exit(main())
