import logging
import os
from datetime import datetime

# Log directory, relative to the working directory unless overridden
LOG_DIR = os.environ.get("ECHOSCOPE_LOG_DIR", "logs")
os.makedirs(LOG_DIR, exist_ok=True)

# One log file per day
LOG_FILE = f"{datetime.now().strftime('%Y-%m-%d')}.log"
LOG_FILE_PATH = os.path.join(LOG_DIR, LOG_FILE)

LOG_FORMAT = '[%(asctime)s] - %(levelname)s - %(name)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


class ColoredFormatter(logging.Formatter):
    """Formatter that colours the level name on the console"""

    COLORS = {
        'DEBUG': '\033[36m',      # Cyan
        'INFO': '\033[32m',       # Green
        'WARNING': '\033[33m',    # Yellow
        'ERROR': '\033[31m',      # Red
        'CRITICAL': '\033[35m',   # Magenta
        'RESET': '\033[0m'
    }

    def __init__(self, *args, use_color: bool = True, **kwargs):
        super().__init__(*args, **kwargs)
        self.use_color = use_color

    def format(self, record):
        # Work on a copy so the file handler keeps the plain level name
        if self.use_color and record.levelname in self.COLORS:
            record = logging.makeLogRecord(record.__dict__)
            record.levelname = f"{self.COLORS[record.levelname]}{record.levelname}{self.COLORS['RESET']}"
        return super().format(record)


def get_logger(name: str = None) -> logging.Logger:
    """
    Get or create a logger with the specified name.

    Args:
        name (str): Name of the logger (usually __name__ from calling module)

    Returns:
        logging.Logger: Configured logger instance
    """
    logger_name = name if name else 'echoscope'
    logger = logging.getLogger(logger_name)

    # Configure once per name
    if not logger.handlers:
        logger.setLevel(logging.DEBUG)

        # File handler - everything
        file_handler = logging.FileHandler(LOG_FILE_PATH)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))

        # Console handler - INFO and above on stderr, so stdout stays clean for reports
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(
            ColoredFormatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT, use_color=True)
        )

        logger.addHandler(file_handler)
        logger.addHandler(console_handler)

        logger.propagate = False

    return logger


logger = get_logger('echoscope')
