# Periodic orbits realizing symbol words
