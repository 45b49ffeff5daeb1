"""Landing envelopes for a multirotor perching on a power line in lateral wind."""
