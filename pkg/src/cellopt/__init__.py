"""Energy optimisation of cyclic robotic cells."""
