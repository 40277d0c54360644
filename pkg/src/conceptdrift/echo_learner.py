"""``python -m conceptdrift.echo_learner``: a do-nothing learner for the external protocol."""

import sys

from .harness import echo_learner_main

if __name__ == "__main__":
    sys.exit(echo_learner_main())
