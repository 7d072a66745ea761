"""model-bridge: stdio adapter between a latent-walk client and real models.

Speaks length-prefixed JSON frames on stdin/stdout: hello, generate, embed,
center, shutdown. ``--echo-toy SEED`` serves an analytic stand-in model
instead of loading real ones, reimplementing the client toolkit's documented
toy construction so the two sides can be conformance-tested against each
other without sharing code.
"""

__version__ = "0.1.0"
