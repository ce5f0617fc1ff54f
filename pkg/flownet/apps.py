from django.apps import AppConfig


class FlownetConfig(AppConfig):
    name = 'flownet'
    verbose_name = 'Optimal inflow for damped tree networks'
