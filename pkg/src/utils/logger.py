"""
Logging setup shared by the CLI and the selftest runner.
"""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(config: Optional[Dict[str, Any]] = None, level: Optional[str] = None) -> None:
    """Set up logging from the `logging:` block of lab_config.yaml"""
    config = config or {}
    log_file = config.get("file", "logs/pamlab.log")
    level_name = (level or config.get("level", "INFO")).upper()

    # Create logs directory before the FileHandler opens the file
    os.makedirs(Path(log_file).parent, exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=config.get("format", DEFAULT_FORMAT),
        handlers=[
            logging.StreamHandler(sys.stdout),
            logging.FileHandler(log_file, mode="a", encoding="utf-8"),
        ],
        force=True,
    )
