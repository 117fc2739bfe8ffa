from .logger import setup_logger, get_logger

setup_logger()
