# Data mappers package
