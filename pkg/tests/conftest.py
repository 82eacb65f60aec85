import os

# keep thread pools small and results reproducible under pytest
os.environ.setdefault("OSCINT_THREADS", "4")
