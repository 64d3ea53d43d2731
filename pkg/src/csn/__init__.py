"""CSN: a calculus for programming wireless sensor networks."""
