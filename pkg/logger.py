import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from config import LOG_DIR

# The environment wins over the config default so tests and CI can redirect logs
log_dir = os.environ.get('SKURANK_LOG_DIR', LOG_DIR)
os.makedirs(log_dir, exist_ok=True)

LOG_FILE = os.path.join(log_dir, 'skurank.log')

logger = logging.getLogger('SkuRankLogger')
logger.setLevel(logging.DEBUG)

# Module-level flag to prevent multiple handler additions
if not hasattr(logger, '_handlers_initialized'):
    console_handler = logging.StreamHandler(sys.stdout)
    if hasattr(sys.stdout, 'reconfigure'):
        try:
            sys.stdout.reconfigure(encoding='utf-8')
        except (ValueError, OSError):
            pass
    console_handler.setLevel(logging.INFO)
    console_handler.setFormatter(logging.Formatter('%(message)s'))

    file_handler = RotatingFileHandler(LOG_FILE, maxBytes=5*1024*1024, backupCount=5, encoding='utf-8')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))

    logger.addHandler(console_handler)
    logger.addHandler(file_handler)
    logger.propagate = False

    logger._handlers_initialized = True


def set_console_level(level: int):
    """Quiet or raise the console handler without touching the log file."""
    for handler in logger.handlers:
        if not isinstance(handler, RotatingFileHandler):
            handler.setLevel(level)
