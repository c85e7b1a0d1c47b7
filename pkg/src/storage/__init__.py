# Atomic artifact storage
