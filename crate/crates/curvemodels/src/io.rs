// implemented in a later layer
