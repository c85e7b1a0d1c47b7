# Business logic services package
