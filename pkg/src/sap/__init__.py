# Stretching-along-paths certification package
