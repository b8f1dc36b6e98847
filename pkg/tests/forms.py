from django import forms
from django.core.exceptions import ValidationError

from mesolab.forms import BetterForm
from mesolab.multiform import MultiForm


class GridForm(BetterForm):
    n = forms.IntegerField(min_value=1)
    scale = forms.FloatField(initial=1.0)

    class Meta:
        fieldsets = (("grid", {"fields": ("n", "scale"), "legend": "Grid"}),)


class LabelForm(BetterForm):
    label = forms.CharField(required=False, initial="")

    class Meta:
        fieldsets = (("label", {"fields": ("label",), "legend": "Label"}),)


class GridMultiForm(MultiForm):
    form_classes = {
        "grid": GridForm,
        "label": LabelForm,
    }


class RaisesErrorForm(forms.Form):
    name = forms.CharField()

    def clean(self):
        raise ValidationError("It broke")


class ErrorMultiForm(MultiForm):
    form_classes = {
        "errors": RaisesErrorForm,
        "errors2": RaisesErrorForm,
    }


class OrderedGridMultiForm(GridMultiForm):
    def clean(self):
        grid = self.cleaned_data["grid"]
        if grid["scale"] >= grid["n"]:
            raise ValidationError("scale must stay below n.", code="ordering")
        return self.cleaned_data


class LabelledGridMultiForm(GridMultiForm):
    def clean(self):
        cleaned_data = self.cleaned_data
        if not cleaned_data["label"]["label"]:
            cleaned_data["label"] = {"label": "grid-{0}".format(cleaned_data["grid"]["n"])}
        return cleaned_data
