import logging
import sys
import os
from logging.handlers import RotatingFileHandler
from datetime import datetime

_LOGGER_NAME = "cls2det"
_PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '../..'))
_LOG_DIR = os.environ.get("CLS2DET_LOG_DIR", os.path.join(_PROJECT_ROOT, 'logs'))
_LOG_BASENAME = f"cls2det_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
_MAX_LINES = 5000
_BACKUP_COUNT = 20
_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"

class LineRotatingFileHandler(RotatingFileHandler):
	"""
	Rotates log after a maximum number of lines, not bytes.
	"""
	def __init__(self, filename, maxLines, backupCount=0, encoding=None):
		super().__init__(filename, maxBytes=0, backupCount=backupCount, encoding=encoding)
		self.maxLines = maxLines
		self.lineCount = 0
		self._count_existing_lines()

	def _count_existing_lines(self):
		try:
			with open(self.baseFilename, 'r', encoding=self.encoding or 'utf-8') as f:
				self.lineCount = sum(1 for _ in f)
		except FileNotFoundError:
			self.lineCount = 0

	def emit(self, record):
		super().emit(record)
		self.lineCount += 1
		if self.lineCount >= self.maxLines:
			self.doRollover()
			self.lineCount = 0

def setup_logger():
	"""
	Set up the shared cls2det logger: stdout plus a timestamped file under logs/.
	The file rotates every 5000 lines and the last 20 files are kept.
	Safe to call from every module; handlers are attached once.
	"""
	logger = logging.getLogger(_LOGGER_NAME)
	if not logger.handlers:
		logger.setLevel(logging.INFO)
		ch = logging.StreamHandler(sys.stdout)
		ch.setLevel(logging.DEBUG)
		ch.setFormatter(logging.Formatter(_FORMAT))
		logger.addHandler(ch)

		try:
			os.makedirs(_LOG_DIR, exist_ok=True)
			fh = LineRotatingFileHandler(os.path.join(_LOG_DIR, _LOG_BASENAME), maxLines=_MAX_LINES, backupCount=_BACKUP_COUNT, encoding="utf-8")
			fh.setLevel(logging.DEBUG)
			fh.setFormatter(logging.Formatter(_FORMAT))
			logger.addHandler(fh)
		except OSError as e:
			# read-only checkouts still get console logging
			logger.warning(f"File logging disabled ({_LOG_DIR}): {e}")
	return logger

def get_logger():
	"""
	Get the shared project logger for use in other modules.
	"""
	return logging.getLogger(_LOGGER_NAME)

def set_verbosity(verbose: bool = False, quiet: bool = False):
	"""
	Map the CLI --verbose / --quiet flags onto the shared logger level.
	"""
	logger = get_logger()
	if quiet:
		logger.setLevel(logging.WARNING)
	elif verbose:
		logger.setLevel(logging.DEBUG)
	else:
		logger.setLevel(logging.INFO)
	return logger
