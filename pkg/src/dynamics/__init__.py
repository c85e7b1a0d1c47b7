# Vector fields, flows and the pulse-forced system package
